#ifndef ETTA_RECURSIVE_CACHE_HPP
#define ETTA_RECURSIVE_CACHE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "etta/embedding.hpp"
#include "etta/error.hpp"

namespace etta {

/// Running exponentially weighted mean of the images routed to one class.
/// `w_hat` is a convex combination of unit vectors, so it is not unit norm.
template <typename Scalar>
struct ClassState {
  Vector<Scalar> w_hat;
  Scalar s = 0;
  std::uint64_t count = 0;
};

template <typename Scalar = double>
std::vector<ClassState<Scalar>> init_states(std::size_t num_classes, Eigen::Index dim) {
  if (num_classes < 2 || dim < 1) {
    throw Error(ErrorCode::InvalidConfig, "need C >= 2 and d >= 1");
  }
  std::vector<ClassState<Scalar>> states(num_classes);
  for (auto& st : states) st.w_hat = Vector<Scalar>::Zero(dim);
  return states;
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
std::size_t argmax(const Eigen::MatrixBase<Derived>& values) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return std::size_t(best);
}

template <typename Derived>
std::size_t pseudo_label(const Eigen::MatrixBase<Derived>& adaptive_logits) {
  return argmax(adaptive_logits);
}

/// Folds image `v` into `state` with weight exp(<w_bar, v>).
///
/// Written as w + e/(s+e) * (v - w), which equals (s*w + e*v)/(s+e) and
/// keeps two properties exact: a fresh state becomes v, and re-inserting
/// v into a state equal to v leaves it unchanged.
template <typename Scalar>
void absorb(ClassState<Scalar>& state, const UnitVector<Scalar>& w_bar, const UnitVector<Scalar>& v) {
  const Scalar e = std::exp(clamp_cosine(w_bar.vec().dot(v.vec())));
  const Scalar total = state.s + e;
  const Scalar step = e / total;
  state.w_hat += step * (v.vec() - state.w_hat);
  state.s = total;
  ++state.count;
}

template <typename Scalar>
ClassState<Scalar> recursive_update(ClassState<Scalar> state, const UnitVector<Scalar>& w_bar,
                                    const UnitVector<Scalar>& v) {
  absorb(state, w_bar, v);
  return state;
}

/// Normalized score of `v` against each contextual embedding. Classes that
/// have absorbed nothing yet score `fallback[i]`.
template <typename Scalar>
Logits<Scalar> recursive_logits(std::span<const ClassState<Scalar>> states, const UnitVector<Scalar>& v,
                                const Logits<Scalar>& fallback) {
  Logits<Scalar> out(Eigen::Index(states.size()));
  for (std::size_t i = 0; i < states.size(); ++i) {
    const auto& st = states[i];
    const Scalar norm = st.w_hat.norm();
    if (st.count == 0 || !(norm >= Scalar(kZeroNormThreshold))) {
      out[Eigen::Index(i)] = fallback[Eigen::Index(i)];
    } else {
      out[Eigen::Index(i)] = clamp_cosine(st.w_hat.dot(v.vec()) / norm);
    }
  }
  return out;
}

template <typename Scalar>
std::size_t state_memory_bytes(std::span<const ClassState<Scalar>> states) {
  std::size_t bytes = 0;
  for (const auto& st : states) {
    bytes += std::size_t(st.w_hat.size()) * sizeof(Scalar) + sizeof(st.s) + sizeof(st.count);
  }
  return bytes;
}

template <typename Scalar>
struct CacheEntry {
  UnitVector<Scalar> embedding;
  Scalar confidence = 0;
  std::uint64_t arrival_index = 0;
};

/// Explicit per-class prototype store scored by softmax cross-attention.
/// When full, the least confident entry (oldest on ties) is evicted.
template <typename Scalar>
class BoundedCache {
 public:
  // std::nullopt capacity means unbounded.
  BoundedCache(std::size_t num_classes, std::optional<std::size_t> capacity)
      : classes_(num_classes), capacity_(capacity) {
    if (capacity_ && *capacity_ < 1) {
      throw Error(ErrorCode::InvalidConfig, "cache capacity must be >= 1");
    }
  }

  void insert(std::size_t cls, const UnitVector<Scalar>& v, Scalar confidence) {
    if (cls >= classes_.size()) {
      throw Error(ErrorCode::InvalidConfig, "class index " + std::to_string(cls) + " out of range");
    }
    auto& entries = classes_[cls];
    entries.push_back({v, confidence, next_arrival_++});
    if (capacity_ && entries.size() > *capacity_) {
      std::size_t worst = 0;
      for (std::size_t k = 1; k < entries.size(); ++k) {
        const auto& e = entries[k];
        const auto& w = entries[worst];
        if (e.confidence < w.confidence || (e.confidence == w.confidence && e.arrival_index < w.arrival_index)) {
          worst = k;
        }
      }
      entries.erase(entries.begin() + std::ptrdiff_t(worst));
    }
  }

  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::optional<std::size_t> capacity() const noexcept { return capacity_; }
  std::span<const CacheEntry<Scalar>> entries(std::size_t cls) const { return classes_.at(cls); }

  std::size_t total_entries() const {
    std::size_t n = 0;
    for (const auto& c : classes_) n += c.size();
    return n;
  }

  std::size_t memory_bytes() const {
    std::size_t bytes = 0;
    for (const auto& c : classes_) {
      for (const auto& e : c) {
        bytes += std::size_t(e.embedding.size()) * sizeof(Scalar) + sizeof(e.confidence) + sizeof(e.arrival_index);
      }
    }
    return bytes;
  }

 private:
  std::vector<std::vector<CacheEntry<Scalar>>> classes_;
  std::optional<std::size_t> capacity_;
  std::uint64_t next_arrival_ = 0;
};

template <typename Scalar>
BoundedCache<Scalar> cache_insert(BoundedCache<Scalar> cache, std::size_t cls, const UnitVector<Scalar>& v,
                                  Scalar confidence) {
  cache.insert(cls, v, confidence);
  return cache;
}

/// softmax(<w_bar, v_k>)-weighted mean of the cached prototypes of one class.
/// Returns a zero vector for an empty list.
template <typename Scalar>
Vector<Scalar> contextual_embedding(std::span<const CacheEntry<Scalar>> entries, const UnitVector<Scalar>& w_bar) {
  Vector<Scalar> acc = Vector<Scalar>::Zero(w_bar.size());
  Scalar mass = 0;
  for (const auto& e : entries) {
    const Scalar weight = std::exp(clamp_cosine(w_bar.vec().dot(e.embedding.vec())));
    acc += weight * e.embedding.vec();
    mass += weight;
  }
  if (mass > 0) acc /= mass;
  return acc;
}

template <typename Scalar>
Logits<Scalar> cross_attention_logits(const BoundedCache<Scalar>& cache, std::span<const UnitVector<Scalar>> w_bar,
                                      const UnitVector<Scalar>& v, const Logits<Scalar>& fallback) {
  Logits<Scalar> out(Eigen::Index(cache.num_classes()));
  for (std::size_t i = 0; i < cache.num_classes(); ++i) {
    const auto entries = cache.entries(i);
    if (entries.empty()) {
      out[Eigen::Index(i)] = fallback[Eigen::Index(i)];
      continue;
    }
    const Vector<Scalar> w_hat = contextual_embedding(entries, w_bar[i]);
    const Scalar norm = w_hat.norm();
    out[Eigen::Index(i)] =
        norm >= Scalar(kZeroNormThreshold) ? clamp_cosine(w_hat.dot(v.vec()) / norm) : fallback[Eigen::Index(i)];
  }
  return out;
}

}  // namespace etta

#endif  // ETTA_RECURSIVE_CACHE_HPP
