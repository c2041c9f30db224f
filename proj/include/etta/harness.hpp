#ifndef ETTA_HARNESS_HPP
#define ETTA_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "etta/embedding.hpp"
#include "etta/engine.hpp"

namespace etta {

struct SampleRecord {
  std::uint64_t index = 0;
  std::size_t pseudo_label = 0;
  std::size_t prediction = 0;
  std::optional<bool> correct;  // empty for unlabeled samples
  double entropy_adaptive = 0;
  double entropy_recursive = 0;
  double weight_adaptive = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct RunReport {
  RunConfig config;
  std::optional<double> top1_accuracy;  // over labeled samples
  std::size_t num_labeled = 0;
  std::vector<SampleRecord> per_sample;
  double wall_time_per_sample = 0;  // seconds
  std::size_t state_memory_bytes = 0;

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

/// Runs the adaptation loop over `stream` in order.
RunReport run_stream(const PromptBank& bank, std::span<const StreamSample> stream, const RunConfig& cfg);

/// Desk-scale stand-in for a shifted target domain.
struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t dim = 64;
  std::size_t num_templates = 8;
  std::size_t num_samples = 2000;
  double class_separation = 1.0;  // minimum angle between text centroids, radians
  double prompt_spread = 0.3;     // tangent noise of templates around the centroid
  double image_spread = 0.6;      // tangent noise of images around the shifted centroid
  double domain_shift = 0.5;      // rotation of image centroids away from text centroids, radians
  double junk_fraction = 0.0;     // share of all bank rows replaced by random directions
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  PromptBank bank;
  std::vector<StreamSample> stream;
};

SynthData synth_generate(const SynthSpec& spec);

/// Benchmark used by the cache-size, alpha and noise experiments.
SynthSpec standard_benchmark(std::uint64_t seed);

/// Adds isotropic Gaussian noise of per-coordinate scale sigma/sqrt(d) to each
/// embedding, then re-normalizes.
std::vector<StreamSample> perturb_stream(std::span<const StreamSample> stream, double sigma, std::uint64_t seed);

struct SweepCell {
  std::string mode;
  std::vector<double> params;  // NaN where a parameter does not apply
  std::optional<double> accuracy;
};

struct SweepTable {
  std::string name;
  std::vector<std::string> param_names;
  std::vector<SweepCell> cells;

  const SweepCell* find(const std::string& mode, std::span<const double> params = {}) const;
};

/// bounded(n) for every size, plus one row for the recursive cache.
SweepTable sweep_cache_sizes(const PromptBank& bank, std::span<const StreamSample> stream,
                             std::span<const std::size_t> sizes, const RunConfig& cfg);

SweepTable sweep_alpha(const PromptBank& bank, std::span<const StreamSample> stream, std::span<const double> alphas,
                       const RunConfig& cfg);

/// Fixed-weight fusion for every beta, plus one row for adaptive fusion.
SweepTable sweep_beta(const PromptBank& bank, std::span<const StreamSample> stream, std::span<const double> betas,
                      const RunConfig& cfg);

/// bounded(n) and recursive runs for every noise level.
SweepTable noise_experiment(const PromptBank& bank, std::span<const StreamSample> stream,
                            std::span<const double> sigmas, std::span<const std::size_t> sizes, const RunConfig& cfg);

std::vector<double> default_alpha_grid();

}  // namespace etta

#endif  // ETTA_HARNESS_HPP
