// Command-line front end: run the adaptation loop, generate synthetic
// benchmarks and run the ablation sweeps.
//
// Exit codes: 0 success, 2 bad configuration, 3 bad input file.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "etta/harness.hpp"
#include "etta/io.hpp"
#include "etta/report.hpp"

namespace {

constexpr int kExitBadConfig = 2;
constexpr int kExitBadInput = 3;

struct SharedOptions {
  std::string bank;
  std::string stream;
  double alpha = etta::kDefaultAlphaOod;
  double tau = etta::kDefaultTemperature;
  std::optional<double> beta;
  std::string mode = "etta";
  std::string labels = "pseudo";
  std::uint64_t seed = 0;
  double noise = 0.0;
  std::string out;
  std::string format = "json";
  bool no_timing = false;

  etta::RunConfig config() const {
    etta::RunConfig cfg;
    cfg.alpha = alpha;
    cfg.fusion.temperature = tau;
    if (beta) cfg.fusion = etta::FusionConfig::fixed(*beta, tau);
    cfg.mode = etta::RunMode::parse(mode);
    cfg.label_source = etta::parse_label_source(labels);
    cfg.seed = seed;
    cfg.noise_sigma = noise;
    cfg.validate();
    return cfg;
  }
};

void add_shared(CLI::App& cmd, SharedOptions& o) {
  cmd.add_option("--bank", o.bank, "prompt bank file (ETEB)")->required();
  cmd.add_option("--stream", o.stream, "embedding stream file (ETES)")->required();
  cmd.add_option("--alpha", o.alpha, "fraction of templates retained per class")->capture_default_str();
  cmd.add_option("--tau", o.tau, "softmax temperature for entropies")->capture_default_str();
  cmd.add_option("--beta", o.beta, "fixed fusion weight of the recursive branch (default: adaptive fusion)");
  cmd.add_option("--mode", o.mode, "etta|adaptive|recursive|bounded:N|bounded:inf|simple")->capture_default_str();
  cmd.add_option("--labels", o.labels, "pseudo|oracle")->capture_default_str();
  cmd.add_option("--seed", o.seed, "seed for embedding noise")->capture_default_str();
  cmd.add_option("--noise", o.noise, "embedding noise sigma")->capture_default_str();
  cmd.add_option("--out", o.out, "output path (default: stdout)");
  cmd.add_option("--format", o.format, "json|csv")->capture_default_str();
}

template <typename Fn>
void with_output(const std::string& path, Fn&& fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw etta::Error(etta::ErrorCode::Io, path + ": cannot open for writing");
  fn(out);
  if (!out) throw etta::Error(etta::ErrorCode::Io, path + ": write failed");
}

struct Inputs {
  etta::PromptBank bank;
  std::vector<etta::StreamSample> stream;
};

Inputs load_inputs(const SharedOptions& o) {
  Inputs in{etta::load_prompt_bank(o.bank), etta::load_stream(o.stream)};
  if (in.bank.normalization_warnings > 0) {
    std::cerr << "warning: re-normalized " << in.bank.normalization_warnings << " bank rows\n";
  }
  return in;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming test-time adaptation over precomputed embeddings"};
  app.require_subcommand(1);

  SharedOptions shared;

  auto* run = app.add_subcommand("run", "adapt over one stream and report per-sample results");
  add_shared(*run, shared);
  run->add_flag("--no-timing", shared.no_timing, "omit wall-clock fields for byte-stable output");

  auto* sweep_cache = app.add_subcommand("sweep-cache", "accuracy of bounded caches against the recursive cache");
  add_shared(*sweep_cache, shared);
  std::vector<std::size_t> sizes{1, 2, 4, 8, 16, 32};
  sweep_cache->add_option("--sizes", sizes, "cache capacities")->delimiter(',')->capture_default_str();

  auto* sweep_alpha = app.add_subcommand("sweep-alpha", "accuracy across prompt filtering strengths");
  add_shared(*sweep_alpha, shared);
  std::vector<double> alphas = etta::default_alpha_grid();
  sweep_alpha->add_option("--alphas", alphas, "alpha grid")->delimiter(',')->capture_default_str();

  auto* sweep_beta = app.add_subcommand("sweep-beta", "fixed-weight fusion against adaptive fusion");
  add_shared(*sweep_beta, shared);
  std::vector<double> betas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  sweep_beta->add_option("--betas", betas, "beta grid")->delimiter(',')->capture_default_str();

  auto* noise = app.add_subcommand("noise", "robustness to embedding noise across cache sizes");
  add_shared(*noise, shared);
  std::vector<double> sigmas{0.0, 0.5, 1.0, 1.5};
  std::vector<std::size_t> noise_sizes{1, 2, 4, 8, 16, 32};
  noise->add_option("--sigmas", sigmas, "noise levels")->delimiter(',')->capture_default_str();
  noise->add_option("--sizes", noise_sizes, "cache capacities")->delimiter(',')->capture_default_str();

  auto* synth = app.add_subcommand("synth", "write a synthetic shifted-domain bank and stream");
  etta::SynthSpec spec;
  std::string out_bank;
  std::string out_stream;
  synth->add_option("--classes", spec.num_classes)->capture_default_str();
  synth->add_option("--dim", spec.dim)->capture_default_str();
  synth->add_option("--templates", spec.num_templates)->capture_default_str();
  synth->add_option("--samples", spec.num_samples)->capture_default_str();
  synth->add_option("--separation", spec.class_separation, "min angle between class centroids (rad)")
      ->capture_default_str();
  synth->add_option("--prompt-spread", spec.prompt_spread)->capture_default_str();
  synth->add_option("--image-spread", spec.image_spread)->capture_default_str();
  synth->add_option("--shift", spec.domain_shift, "domain shift angle (rad)")->capture_default_str();
  synth->add_option("--junk-fraction", spec.junk_fraction, "share of templates replaced by random directions")
      ->capture_default_str();
  synth->add_option("--seed", spec.seed)->capture_default_str();
  synth->add_option("--out-bank", out_bank)->required();
  synth->add_option("--out-stream", out_stream)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadConfig;
  }

  try {
    if (synth->parsed()) {
      const auto data = etta::synth_generate(spec);
      etta::write_prompt_bank(data.bank, out_bank);
      etta::write_stream(data.stream, std::uint32_t(spec.dim), out_stream);
      return 0;
    }

    const etta::RunConfig cfg = shared.config();
    const auto format = etta::parse_report_format(shared.format);
    const Inputs in = load_inputs(shared);

    if (run->parsed()) {
      const auto report = etta::run_stream(in.bank, in.stream, cfg);
      with_output(shared.out, [&](std::ostream& os) {
        etta::write_report(report, format, os, {.include_timing = !shared.no_timing});
      });
      return 0;
    }

    etta::SweepTable table;
    if (sweep_cache->parsed()) table = etta::sweep_cache_sizes(in.bank, in.stream, sizes, cfg);
    if (sweep_alpha->parsed()) table = etta::sweep_alpha(in.bank, in.stream, alphas, cfg);
    if (sweep_beta->parsed()) table = etta::sweep_beta(in.bank, in.stream, betas, cfg);
    if (noise->parsed()) table = etta::noise_experiment(in.bank, in.stream, sigmas, noise_sizes, cfg);
    with_output(shared.out, [&](std::ostream& os) { etta::write_table(table, cfg, format, os); });
    return 0;
  } catch (const etta::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_input_error() ? kExitBadInput : kExitBadConfig;
  }
}
