#ifndef ETTA_ENGINE_HPP
#define ETTA_ENGINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "etta/embedding.hpp"
#include "etta/ensemble.hpp"
#include "etta/fusion.hpp"
#include "etta/recursive_cache.hpp"

namespace etta {

enum class ModeKind {
  Etta,            // adaptive ensemble + recursive update + fusion
  AdaptiveOnly,    // adaptive logits only, no state
  RecursiveOnly,   // prediction from the recursive logits alone
  Bounded,         // explicit prototype cache in place of the recursion
  SimpleEnsemble,  // zero-shot with every template averaged
};

struct RunMode {
  ModeKind kind = ModeKind::Etta;
  // Bounded mode only; nullopt is an unbounded cache.
  std::optional<std::size_t> capacity;

  static RunMode etta() { return {ModeKind::Etta, std::nullopt}; }
  static RunMode bounded(std::optional<std::size_t> capacity) { return {ModeKind::Bounded, capacity}; }

  // Accepts etta | adaptive | recursive | simple | bounded:N | bounded:inf.
  static RunMode parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const RunMode&, const RunMode&) = default;
};

enum class LabelSource { Pseudo, Oracle };

LabelSource parse_label_source(const std::string& text);
std::string to_string(LabelSource source);
std::string to_string(FusionMode mode);

struct RunConfig {
  double alpha = kDefaultAlphaOod;
  FusionConfig fusion;
  RunMode mode;
  LabelSource label_source = LabelSource::Pseudo;
  std::uint64_t seed = 0;
  // Isotropic embedding noise added before re-normalization.
  double noise_sigma = 0.0;

  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

struct StepResult {
  std::size_t pseudo_label = 0;  // class whose state absorbed the sample
  std::size_t prediction = 0;
  double entropy_adaptive = 0;
  double entropy_recursive = 0;
  double weight_adaptive = 1;
  Logits<double> adaptive;
  Logits<double> recursive;
  Logits<double> combined;
};

/// The per-sample adaptation loop. State evolves strictly in stream order.
class Engine {
 public:
  Engine(const PromptBank& bank, RunConfig cfg);

  // `label` is only used when the label source is Oracle.
  StepResult step(const Embedding& v, std::optional<std::size_t> label = std::nullopt);

  const RunConfig& config() const noexcept { return cfg_; }
  const std::vector<ClassState<double>>& states() const noexcept { return states_; }
  const BoundedCache<double>& cache() const noexcept { return cache_; }
  std::size_t state_memory_bytes() const;

 private:
  const PromptBank& bank_;
  RunConfig cfg_;
  EnsembleConfig ensemble_cfg_;
  std::vector<ClassState<double>> states_;
  BoundedCache<double> cache_;
  std::vector<Embedding> simple_;
  // Modes that only ensemble the routed class score through the Gram matrices.
  std::optional<TemplateGram> gram_;
};

}  // namespace etta

#endif  // ETTA_ENGINE_HPP
