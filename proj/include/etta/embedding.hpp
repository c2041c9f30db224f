#ifndef ETTA_EMBEDDING_HPP
#define ETTA_EMBEDDING_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "etta/error.hpp"

namespace etta {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Per-class scores on the cosine scale.
template <typename Scalar>
using Logits = Vector<Scalar>;

inline constexpr double kZeroNormThreshold = 1e-12;
inline constexpr double kUnitNormTolerance = 1e-5;

/// A vector on the unit sphere. Only normalize() and trusted() produce one,
/// so raw encoder outputs cannot reach similarity code by accident.
template <typename Scalar>
class UnitVector {
 public:
  using VectorType = Vector<Scalar>;

  UnitVector() = default;

  // Caller guarantees |norm - 1| is within kUnitNormTolerance.
  static UnitVector trusted(VectorType v) {
    UnitVector u;
    u.data_ = std::move(v);
    return u;
  }

  const VectorType& vec() const noexcept { return data_; }
  Eigen::Index size() const noexcept { return data_.size(); }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  friend bool operator==(const UnitVector& a, const UnitVector& b) {
    return a.data_.size() == b.data_.size() && a.data_ == b.data_;
  }

 private:
  VectorType data_;
};

using Embedding = UnitVector<double>;

/// Divides `raw` by its Euclidean norm. Throws ZeroVector when the norm is
/// below 1e-12.
template <typename Derived>
UnitVector<typename Derived::Scalar> normalize(const Eigen::MatrixBase<Derived>& raw) {
  using Scalar = typename Derived::Scalar;
  const Scalar norm = raw.norm();
  if (!(norm >= Scalar(kZeroNormThreshold))) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a vector with norm " + std::to_string(norm));
  }
  return UnitVector<Scalar>::trusted((raw / norm).eval());
}

template <typename Scalar>
Scalar clamp_cosine(Scalar c) {
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
Scalar cosine(const UnitVector<Scalar>& a, const UnitVector<Scalar>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine of vectors with d=" + std::to_string(a.size()) + " and d=" + std::to_string(b.size()));
  }
  return clamp_cosine(a.vec().dot(b.vec()));
}

template <typename Derived>
bool is_unit_norm(const Eigen::MatrixBase<Derived>& v, double tol = kUnitNormTolerance) {
  return std::abs(double(v.norm()) - 1.0) <= tol;
}

/// C x T text embeddings stored class-major: row i*T + k is template k of
/// class i. Every row is unit norm.
struct PromptBank {
  RowMatrix<double> embeddings;
  std::size_t num_classes = 0;
  std::size_t num_templates = 0;
  std::vector<std::string> class_names;
  // Either T generic templates or C*T class-specific prompts (class-major).
  std::vector<std::string> template_texts;
  bool class_specific_templates = false;
  // Raw metadata bytes as read from disk; written back verbatim when set.
  std::optional<std::string> raw_metadata;
  // Rows re-normalized on load because their norm was off by more than the
  // loader tolerance.
  std::size_t normalization_warnings = 0;

  Eigen::Index dim() const noexcept { return embeddings.cols(); }

  auto class_block(std::size_t i) const {
    return embeddings.middleRows(Eigen::Index(i * num_templates), Eigen::Index(num_templates));
  }
  auto row(std::size_t i, std::size_t k) const { return embeddings.row(Eigen::Index(i * num_templates + k)); }
};

/// Builds a bank from class-major rows and validates shape and unit norm.
inline PromptBank make_prompt_bank(RowMatrix<double> rows, std::size_t num_classes, std::size_t num_templates,
                                   std::vector<std::string> class_names = {},
                                   std::vector<std::string> template_texts = {}) {
  if (num_classes < 2 || num_templates < 1) {
    throw Error(ErrorCode::InvalidConfig, "prompt bank needs C >= 2 and T >= 1");
  }
  if (std::size_t(rows.rows()) != num_classes * num_templates || rows.cols() < 1) {
    throw Error(ErrorCode::DimensionMismatch, "prompt bank rows do not match C*T");
  }
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    if (!is_unit_norm(rows.row(r))) {
      throw Error(ErrorCode::InvalidConfig, "prompt bank row " + std::to_string(r) + " is not unit norm");
    }
  }
  if (class_names.empty()) {
    for (std::size_t i = 0; i < num_classes; ++i) class_names.push_back("class_" + std::to_string(i));
  }
  if (template_texts.empty()) {
    for (std::size_t k = 0; k < num_templates; ++k) template_texts.push_back("template_" + std::to_string(k));
  }
  PromptBank bank;
  bank.embeddings = std::move(rows);
  bank.num_classes = num_classes;
  bank.num_templates = num_templates;
  bank.class_names = std::move(class_names);
  bank.class_specific_templates = template_texts.size() == num_classes * num_templates;
  bank.template_texts = std::move(template_texts);
  return bank;
}

/// One image embedding from the test stream.
struct StreamSample {
  Embedding embedding;
  std::optional<std::size_t> label;
  std::uint64_t index = 0;
};

}  // namespace etta

#endif  // ETTA_EMBEDDING_HPP
