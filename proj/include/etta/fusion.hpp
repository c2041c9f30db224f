#ifndef ETTA_FUSION_HPP
#define ETTA_FUSION_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>
#include <utility>

#include "etta/embedding.hpp"
#include "etta/error.hpp"
#include "etta/recursive_cache.hpp"

namespace etta {

inline constexpr double kDefaultTemperature = 0.01;

enum class FusionMode { Adaptive, Fixed };

struct FusionConfig {
  double temperature = kDefaultTemperature;
  FusionMode mode = FusionMode::Adaptive;
  // Weight of the recursive branch in fixed mode.
  double beta = 0.0;

  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;

  static FusionConfig fixed(double beta, double temperature = kDefaultTemperature) {
    return {temperature, FusionMode::Fixed, beta};
  }

  void validate() const {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw Error(ErrorCode::InvalidConfig, "temperature must be positive, got " + std::to_string(temperature));
    }
    if (mode == FusionMode::Fixed && !(beta >= 0.0 && beta <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "beta must lie in [0, 1], got " + std::to_string(beta));
    }
  }
};

/// Shannon entropy (nats) of softmax(logits / temperature).
template <typename Derived>
typename Derived::Scalar entropy(const Eigen::MatrixBase<Derived>& logits, typename Derived::Scalar temperature) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = logits.maxCoeff();
  const auto z = ((logits.array() - peak) / temperature).eval();
  const auto e = z.exp().eval();
  const Scalar total = e.sum();
  const Scalar log_total = std::log(total);
  Scalar h = 0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (e[i] > 0) h -= (e[i] / total) * (z[i] - log_total);
  }
  return std::clamp(h, Scalar(0), Scalar(std::log(Scalar(logits.size()))));
}

template <typename Scalar>
struct FusedResult {
  Logits<Scalar> combined;
  Scalar weight_adaptive = 0;
  Scalar weight_recursive = 0;
  Scalar entropy_adaptive = 0;
  Scalar entropy_recursive = 0;
  std::size_t prediction = 0;
};

/// Weights for the adaptive and recursive branches. Adaptive mode gives each
/// branch the other's share of the total entropy; two zero entropies split
/// evenly.
template <typename Scalar>
std::pair<Scalar, Scalar> fusion_weights(Scalar h_adaptive, Scalar h_recursive, const FusionConfig& cfg) {
  if (cfg.mode == FusionMode::Fixed) {
    return {Scalar(1) - Scalar(cfg.beta), Scalar(cfg.beta)};
  }
  const Scalar total = h_adaptive + h_recursive;
  if (!(total > 0)) return {Scalar(0.5), Scalar(0.5)};
  return {h_recursive / total, h_adaptive / total};
}

template <typename Scalar>
FusedResult<Scalar> fuse(const Logits<Scalar>& adaptive, const Logits<Scalar>& recursive, const FusionConfig& cfg) {
  if (adaptive.size() != recursive.size()) {
    throw Error(ErrorCode::DimensionMismatch, "logit vectors differ in length");
  }
  FusedResult<Scalar> out;
  const auto tau = Scalar(cfg.temperature);
  out.entropy_adaptive = entropy(adaptive, tau);
  out.entropy_recursive = entropy(recursive, tau);
  std::tie(out.weight_adaptive, out.weight_recursive) =
      fusion_weights(out.entropy_adaptive, out.entropy_recursive, cfg);

  // Rounding may push a convex combination an ulp outside its endpoints.
  out.combined = (out.weight_adaptive * adaptive + out.weight_recursive * recursive)
                     .cwiseMax(adaptive.cwiseMin(recursive))
                     .cwiseMin(adaptive.cwiseMax(recursive));
  out.prediction = argmax(out.combined);
  return out;
}

}  // namespace etta

#endif  // ETTA_FUSION_HPP
