#include "etta/harness.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

#include "etta/rng.hpp"

namespace etta {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kMaxRejectionAttempts = 100000;

Vector<double> random_direction(Rng& rng, std::size_t dim) {
  Vector<double> v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = rng.normal();
  return v;
}

// Tangent-style perturbation: noise has expected squared norm spread^2.
Embedding perturb(const Vector<double>& center, double spread, Rng& rng) {
  if (spread == 0.0) return normalize(center);
  const double scale = spread / std::sqrt(double(center.size()));
  Vector<double> noisy = center + scale * random_direction(rng, std::size_t(center.size()));
  return normalize(noisy);
}

// Runs fn(0..n-1) over a few worker threads; results are keyed by index so
// the schedule cannot change them.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::optional<double> run_accuracy(const PromptBank& bank, std::span<const StreamSample> stream,
                                   const RunConfig& cfg) {
  return run_stream(bank, stream, cfg).top1_accuracy;
}

}  // namespace

RunReport run_stream(const PromptBank& bank, std::span<const StreamSample> stream, const RunConfig& cfg) {
  cfg.validate();
  if (stream.empty()) throw Error(ErrorCode::EmptyStream, "stream has no samples");

  std::vector<StreamSample> noisy;
  if (cfg.noise_sigma > 0.0) {
    noisy = perturb_stream(stream, cfg.noise_sigma, cfg.seed);
    stream = noisy;
  }

  Engine engine(bank, cfg);
  RunReport report;
  report.config = cfg;
  report.per_sample.reserve(stream.size());
  std::size_t correct = 0;

  const auto start = std::chrono::steady_clock::now();
  for (const auto& sample : stream) {
    if (sample.embedding.size() != bank.dim()) {
      throw Error(ErrorCode::DimensionMismatch, "sample " + std::to_string(sample.index) + " has d=" +
                                                    std::to_string(sample.embedding.size()) + ", bank has d=" +
                                                    std::to_string(bank.dim()));
    }
    if (sample.label && *sample.label >= bank.num_classes) {
      throw Error(ErrorCode::DimMismatchWithMetadata, "sample " + std::to_string(sample.index) + " has label " +
                                                          std::to_string(*sample.label) + " but the bank has " +
                                                          std::to_string(bank.num_classes) + " classes");
    }
    const StepResult step = engine.step(sample.embedding, sample.label);
    SampleRecord rec;
    rec.index = sample.index;
    rec.pseudo_label = step.pseudo_label;
    rec.prediction = step.prediction;
    rec.entropy_adaptive = step.entropy_adaptive;
    rec.entropy_recursive = step.entropy_recursive;
    rec.weight_adaptive = step.weight_adaptive;
    if (sample.label) {
      rec.correct = step.prediction == *sample.label;
      ++report.num_labeled;
      if (*rec.correct) ++correct;
    }
    report.per_sample.push_back(rec);
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

  report.wall_time_per_sample = elapsed.count() / double(stream.size());
  report.state_memory_bytes = engine.state_memory_bytes();
  if (report.num_labeled > 0) report.top1_accuracy = double(correct) / double(report.num_labeled);
  return report;
}

void SynthSpec::validate() const {
  if (num_classes < 2) throw Error(ErrorCode::InvalidConfig, "synthetic data needs at least 2 classes");
  if (dim < 2) throw Error(ErrorCode::InvalidConfig, "synthetic data needs d >= 2");
  if (num_templates < 1) throw Error(ErrorCode::InvalidConfig, "synthetic data needs at least 1 template");
  if (!(class_separation >= 0) || !(prompt_spread >= 0) || !(image_spread >= 0) || !std::isfinite(domain_shift)) {
    throw Error(ErrorCode::InvalidConfig, "separation and spreads must be >= 0");
  }
  if (!(junk_fraction >= 0 && junk_fraction < 1)) {
    throw Error(ErrorCode::InvalidConfig, "junk fraction must lie in [0, 1)");
  }
}

SynthData synth_generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t C = spec.num_classes;
  const std::size_t T = spec.num_templates;
  const std::size_t d = spec.dim;

  // Text centroids by rejection on the sphere.
  const double max_cos = std::cos(spec.class_separation);
  std::vector<Embedding> centroids;
  for (std::size_t i = 0; i < C; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxRejectionAttempts && !placed; ++attempt) {
      Embedding candidate = normalize(random_direction(rng, d));
      placed = true;
      for (const auto& other : centroids) {
        if (candidate.vec().dot(other.vec()) > max_cos) {
          placed = false;
          break;
        }
      }
      if (placed) centroids.push_back(std::move(candidate));
    }
    if (!placed) {
      throw Error(ErrorCode::SeparationInfeasible,
                  "could not place class " + std::to_string(i) + " with separation " +
                      std::to_string(spec.class_separation) + " rad in d=" + std::to_string(d));
    }
  }

  // Junk rows are spread over the whole bank, so classes differ in how
  // contaminated their ensembles are.
  Rng template_rng = rng.split();
  const auto num_junk = std::size_t(std::floor(spec.junk_fraction * double(C * T) + 0.5));
  std::vector<std::size_t> slots(C * T);
  for (std::size_t r = 0; r < slots.size(); ++r) slots[r] = r;
  template_rng.shuffle(slots);
  std::vector<bool> junk(C * T, false);
  for (std::size_t j = 0; j < num_junk; ++j) junk[slots[j]] = true;

  RowMatrix<double> rows(Eigen::Index(C * T), Eigen::Index(d));
  for (std::size_t i = 0; i < C; ++i) {
    for (std::size_t k = 0; k < T; ++k) {
      const std::size_t r = i * T + k;
      const Embedding w = junk[r] ? normalize(random_direction(template_rng, d))
                                  : perturb(centroids[i].vec(), spec.prompt_spread, template_rng);
      rows.row(Eigen::Index(r)) = w.vec().transpose();
    }
  }

  // Image centroids: each text centroid rotated by the shift angle inside the
  // plane it spans with a random orthogonal direction.
  Rng image_rng = rng.split();
  std::vector<Vector<double>> image_centers;
  for (const auto& mu : centroids) {
    Vector<double> r = random_direction(image_rng, d);
    r -= r.dot(mu.vec()) * mu.vec();
    r.normalize();
    image_centers.push_back(std::cos(spec.domain_shift) * mu.vec() + std::sin(spec.domain_shift) * r);
  }

  std::vector<std::size_t> labels(spec.num_samples);
  for (std::size_t t = 0; t < labels.size(); ++t) labels[t] = t % C;
  image_rng.shuffle(labels);

  SynthData out;
  out.stream.reserve(labels.size());
  for (std::size_t t = 0; t < labels.size(); ++t) {
    StreamSample s;
    s.embedding = perturb(image_centers[labels[t]], spec.image_spread, image_rng);
    s.label = labels[t];
    s.index = t;
    out.stream.push_back(std::move(s));
  }
  out.bank = make_prompt_bank(std::move(rows), C, T);
  return out;
}

SynthSpec standard_benchmark(std::uint64_t seed) {
  SynthSpec spec;
  spec.num_classes = 10;
  spec.dim = 32;
  spec.num_templates = 4;
  spec.num_samples = 2000;
  spec.class_separation = 0.8;
  spec.prompt_spread = 0.6;
  spec.image_spread = 1.0;
  spec.domain_shift = 0.8;
  spec.seed = seed;
  return spec;
}

std::vector<StreamSample> perturb_stream(std::span<const StreamSample> stream, double sigma, std::uint64_t seed) {
  Rng rng(seed ^ 0x6e6f697365ULL);
  std::vector<StreamSample> out(stream.begin(), stream.end());
  if (sigma == 0.0) return out;
  for (auto& s : out) s.embedding = perturb(s.embedding.vec(), sigma, rng);
  return out;
}

const SweepCell* SweepTable::find(const std::string& mode, std::span<const double> params) const {
  for (const auto& cell : cells) {
    if (cell.mode != mode) continue;
    bool match = true;
    for (std::size_t p = 0; p < params.size() && p < cell.params.size(); ++p) {
      if (!(cell.params[p] == params[p]) && !(std::isnan(cell.params[p]) && std::isnan(params[p]))) match = false;
    }
    if (match) return &cell;
  }
  return nullptr;
}

SweepTable sweep_cache_sizes(const PromptBank& bank, std::span<const StreamSample> stream,
                             std::span<const std::size_t> sizes, const RunConfig& cfg) {
  if (sizes.empty()) throw Error(ErrorCode::InvalidConfig, "cache-size sweep needs at least one size");
  SweepTable table{"cache_size", {"cache_size"}, {}};
  table.cells.resize(sizes.size() + 1);
  parallel_for(table.cells.size(), [&](std::size_t c) {
    RunConfig run = cfg;
    SweepCell& cell = table.cells[c];
    if (c < sizes.size()) {
      run.mode = RunMode::bounded(sizes[c]);
      cell.params = {double(sizes[c])};
    } else {
      run.mode = RunMode::etta();
      cell.params = {kNaN};
    }
    cell.mode = run.mode.to_string();
    cell.accuracy = run_accuracy(bank, stream, run);
  });
  return table;
}

SweepTable sweep_alpha(const PromptBank& bank, std::span<const StreamSample> stream, std::span<const double> alphas,
                       const RunConfig& cfg) {
  if (alphas.empty()) throw Error(ErrorCode::InvalidConfig, "alpha sweep needs at least one value");
  SweepTable table{"alpha", {"alpha"}, {}};
  table.cells.resize(alphas.size());
  parallel_for(alphas.size(), [&](std::size_t c) {
    RunConfig run = cfg;
    run.alpha = alphas[c];
    table.cells[c] = {run.mode.to_string(), {alphas[c]}, run_accuracy(bank, stream, run)};
  });
  return table;
}

SweepTable sweep_beta(const PromptBank& bank, std::span<const StreamSample> stream, std::span<const double> betas,
                      const RunConfig& cfg) {
  if (betas.empty()) throw Error(ErrorCode::InvalidConfig, "beta sweep needs at least one value");
  SweepTable table{"beta", {"beta"}, {}};
  table.cells.resize(betas.size() + 1);
  parallel_for(table.cells.size(), [&](std::size_t c) {
    RunConfig run = cfg;
    if (c < betas.size()) {
      run.fusion = FusionConfig::fixed(betas[c], cfg.fusion.temperature);
      table.cells[c] = {"fixed", {betas[c]}, run_accuracy(bank, stream, run)};
    } else {
      run.fusion.mode = FusionMode::Adaptive;
      table.cells[c] = {"adaptive", {kNaN}, run_accuracy(bank, stream, run)};
    }
  });
  return table;
}

SweepTable noise_experiment(const PromptBank& bank, std::span<const StreamSample> stream,
                            std::span<const double> sigmas, std::span<const std::size_t> sizes, const RunConfig& cfg) {
  if (sigmas.empty()) throw Error(ErrorCode::InvalidConfig, "noise experiment needs at least one sigma");
  for (const double s : sigmas) {
    if (!(s >= 0.0)) throw Error(ErrorCode::InvalidConfig, "noise sigma must be >= 0");
  }
  SweepTable table{"noise", {"sigma", "cache_size"}, {}};
  const std::size_t per_sigma = sizes.size() + 1;
  table.cells.resize(sigmas.size() * per_sigma);
  parallel_for(table.cells.size(), [&](std::size_t c) {
    const double sigma = sigmas[c / per_sigma];
    const std::size_t j = c % per_sigma;
    RunConfig run = cfg;
    run.noise_sigma = sigma;
    SweepCell& cell = table.cells[c];
    if (j < sizes.size()) {
      run.mode = RunMode::bounded(sizes[j]);
      cell.params = {sigma, double(sizes[j])};
    } else {
      run.mode = RunMode::etta();
      cell.params = {sigma, kNaN};
    }
    cell.mode = run.mode.to_string();
    cell.accuracy = run_accuracy(bank, stream, run);
  });
  return table;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(double(i) / 10.0);
  return grid;
}

}  // namespace etta
