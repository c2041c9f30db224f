#ifndef ETTA_ENSEMBLE_HPP
#define ETTA_ENSEMBLE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "etta/embedding.hpp"
#include "etta/error.hpp"

namespace etta {

inline constexpr double kDefaultAlphaOod = 0.6;
inline constexpr double kDefaultAlphaCrossDomain = 0.3;

struct EnsembleConfig {
  // Fraction of templates retained per class, in (0, 1].
  double alpha = kDefaultAlphaOod;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1], got " + std::to_string(alpha));
    }
  }
};

/// k = max(1, round_half_up(alpha * T)).
inline std::size_t retained_count(double alpha, std::size_t num_templates) {
  const auto k = static_cast<std::size_t>(std::floor(alpha * double(num_templates) + 0.5));
  return std::clamp<std::size_t>(k, 1, num_templates);
}

/// Indices of the k largest similarities, returned in ascending index order.
/// Equal similarities rank the lower index first.
template <typename Derived>
std::vector<std::size_t> top_k_indices(const Eigen::MatrixBase<Derived>& similarities, std::size_t k) {
  const auto n = static_cast<std::size_t>(similarities.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  k = std::min(k, n);
  if (k < n) {
    auto ranks_before = [&](std::size_t a, std::size_t b) {
      const auto sa = similarities[Eigen::Index(a)];
      const auto sb = similarities[Eigen::Index(b)];
      return sa > sb || (sa == sb && a < b);
    };
    std::nth_element(order.begin(), order.begin() + std::ptrdiff_t(k), order.end(), ranks_before);
    order.resize(k);
    std::sort(order.begin(), order.end());
  }
  return order;
}

/// Templates of one class (rows of `class_embs`) kept for image `v`.
template <typename Derived, typename Scalar>
std::vector<std::size_t> filter_prompts(const Eigen::MatrixBase<Derived>& class_embs, const UnitVector<Scalar>& v,
                                        double alpha) {
  if (class_embs.cols() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch, "template and image dimensions differ");
  }
  const Vector<Scalar> sims = class_embs * v.vec();
  return top_k_indices(sims, retained_count(alpha, std::size_t(class_embs.rows())));
}

/// Normalized sum of the selected rows, accumulated in index order.
template <typename Derived>
UnitVector<typename Derived::Scalar> ensemble_rows(const Eigen::MatrixBase<Derived>& rows,
                                                   std::span<const std::size_t> indices) {
  using Scalar = typename Derived::Scalar;
  if (indices.empty()) {
    throw Error(ErrorCode::DegenerateEnsemble, "empty retained set");
  }
  Vector<Scalar> acc = Vector<Scalar>::Zero(rows.cols());
  for (const auto k : indices) acc += rows.row(Eigen::Index(k)).transpose();
  const Scalar norm = acc.norm();
  if (!(norm >= Scalar(kZeroNormThreshold))) {
    throw Error(ErrorCode::DegenerateEnsemble, "retained prompt embeddings sum to zero");
  }
  return UnitVector<Scalar>::trusted((acc / norm).eval());
}

template <typename Scalar>
UnitVector<Scalar> ensemble_class(std::span<const UnitVector<Scalar>> retained) {
  if (retained.empty()) {
    throw Error(ErrorCode::DegenerateEnsemble, "empty retained set");
  }
  RowMatrix<Scalar> rows(Eigen::Index(retained.size()), retained.front().size());
  for (std::size_t k = 0; k < retained.size(); ++k) rows.row(Eigen::Index(k)) = retained[k].vec().transpose();
  std::vector<std::size_t> all(retained.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return ensemble_rows(rows, all);
}

struct EnsembleResult {
  std::vector<Embedding> ensembled;
  std::vector<std::vector<std::size_t>> retained_indices;
  Logits<double> adaptive_logits;
};

/// Per-image prompt filtering, ensembling and scoring for every class.
inline EnsembleResult adaptive_step(const PromptBank& bank, const Embedding& v, const EnsembleConfig& cfg) {
  if (bank.dim() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch, "bank d=" + std::to_string(bank.dim()) +
                                                  " but image d=" + std::to_string(v.size()));
  }
  const std::size_t C = bank.num_classes;
  const std::size_t T = bank.num_templates;
  const std::size_t k = retained_count(cfg.alpha, T);

  const Vector<double> sims = bank.embeddings * v.vec();

  EnsembleResult out;
  out.ensembled.reserve(C);
  out.retained_indices.reserve(C);
  out.adaptive_logits.resize(Eigen::Index(C));
  for (std::size_t i = 0; i < C; ++i) {
    auto retained = top_k_indices(sims.segment(Eigen::Index(i * T), Eigen::Index(T)), k);
    try {
      out.ensembled.push_back(ensemble_rows(bank.class_block(i), retained));
    } catch (Error& e) {
      Error tagged(e.code(), std::string(e.what()) + " (class " + std::to_string(i) + ")");
      tagged.class_index = i;
      throw tagged;
    }
    out.adaptive_logits[Eigen::Index(i)] = clamp_cosine(out.ensembled.back().vec().dot(v.vec()));
    out.retained_indices.push_back(std::move(retained));
  }
  return out;
}

/// Per-class Gram matrices of the template embeddings, stacked (C*T) x T.
///
/// The adaptive logit of class i is <S, v> / ||S|| with S the sum of the
/// retained rows. <S, v> is a sum of already computed similarities and
/// ||S||^2 a sum over a k x k block of the Gram matrix, so the logits never
/// need the ensembled vectors themselves.
class TemplateGram {
 public:
  explicit TemplateGram(const PromptBank& bank)
      : gram_(Eigen::Index(bank.num_classes * bank.num_templates), Eigen::Index(bank.num_templates)),
        num_templates_(bank.num_templates) {
    const auto T = Eigen::Index(num_templates_);
    for (std::size_t i = 0; i < bank.num_classes; ++i) {
      const auto block = bank.class_block(i);
      gram_.middleRows(Eigen::Index(i) * T, T).noalias() = block * block.transpose();
    }
  }

  std::size_t num_templates() const noexcept { return num_templates_; }

  // Squared norm of the sum of the listed rows of class `cls`.
  double sum_squared_norm(std::size_t cls, std::span<const std::size_t> indices) const {
    const auto base = Eigen::Index(cls * num_templates_);
    double total = 0;
    for (const auto a : indices) {
      const auto row = gram_.row(base + Eigen::Index(a));
      for (const auto b : indices) total += row[Eigen::Index(b)];
    }
    return total;
  }

 private:
  RowMatrix<double> gram_;
  std::size_t num_templates_;
};

struct AdaptiveScores {
  std::vector<std::vector<std::size_t>> retained_indices;
  Logits<double> adaptive_logits;
};

/// Same retained sets and logits as adaptive_step, up to rounding, without
/// building the ensembled vectors.
inline AdaptiveScores adaptive_scores(const PromptBank& bank, const TemplateGram& gram, const Embedding& v,
                                      const EnsembleConfig& cfg) {
  if (bank.dim() != v.size()) {
    throw Error(ErrorCode::DimensionMismatch, "bank d=" + std::to_string(bank.dim()) +
                                                  " but image d=" + std::to_string(v.size()));
  }
  if (gram.num_templates() != bank.num_templates) {
    throw Error(ErrorCode::DimensionMismatch, "Gram matrices were built for another bank");
  }
  const std::size_t C = bank.num_classes;
  const std::size_t T = bank.num_templates;
  const std::size_t k = retained_count(cfg.alpha, T);

  const Vector<double> sims = bank.embeddings * v.vec();

  AdaptiveScores out;
  out.retained_indices.reserve(C);
  out.adaptive_logits.resize(Eigen::Index(C));
  for (std::size_t i = 0; i < C; ++i) {
    const auto class_sims = sims.segment(Eigen::Index(i * T), Eigen::Index(T));
    auto retained = top_k_indices(class_sims, k);
    double dot = 0;
    for (const auto r : retained) dot += class_sims[Eigen::Index(r)];
    const double sq = gram.sum_squared_norm(i, retained);
    if (!(sq >= kZeroNormThreshold * kZeroNormThreshold)) {
      Error e(ErrorCode::DegenerateEnsemble,
              "retained prompt embeddings sum to zero (class " + std::to_string(i) + ")");
      e.class_index = i;
      throw e;
    }
    out.adaptive_logits[Eigen::Index(i)] = clamp_cosine(dot / std::sqrt(sq));
    out.retained_indices.push_back(std::move(retained));
  }
  return out;
}

/// Mean of every template per class, normalized: the zero-shot baseline.
inline std::vector<Embedding> simple_ensemble(const PromptBank& bank) {
  std::vector<std::size_t> all(bank.num_templates);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<Embedding> out;
  out.reserve(bank.num_classes);
  for (std::size_t i = 0; i < bank.num_classes; ++i) {
    try {
      out.push_back(ensemble_rows(bank.class_block(i), all));
    } catch (Error& e) {
      Error tagged(e.code(), std::string(e.what()) + " (class " + std::to_string(i) + ")");
      tagged.class_index = i;
      throw tagged;
    }
  }
  return out;
}

inline Logits<double> class_logits(std::span<const Embedding> class_embs, const Embedding& v) {
  Logits<double> out(Eigen::Index(class_embs.size()));
  for (std::size_t i = 0; i < class_embs.size(); ++i) {
    out[Eigen::Index(i)] = clamp_cosine(class_embs[i].vec().dot(v.vec()));
  }
  return out;
}

}  // namespace etta

#endif  // ETTA_ENSEMBLE_HPP
