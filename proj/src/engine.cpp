#include "etta/engine.hpp"

#include <charconv>

namespace etta {

RunMode RunMode::parse(const std::string& text) {
  if (text == "etta") return {ModeKind::Etta, std::nullopt};
  if (text == "adaptive") return {ModeKind::AdaptiveOnly, std::nullopt};
  if (text == "recursive") return {ModeKind::RecursiveOnly, std::nullopt};
  if (text == "simple") return {ModeKind::SimpleEnsemble, std::nullopt};
  const std::string prefix = "bounded:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string arg = text.substr(prefix.size());
    if (arg == "inf") return bounded(std::nullopt);
    std::size_t n = 0;
    const auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), n);
    if (ec == std::errc() && ptr == arg.data() + arg.size() && n >= 1) return bounded(n);
  }
  throw Error(ErrorCode::InvalidConfig,
              "unknown mode \"" + text + "\" (expected etta|adaptive|recursive|simple|bounded:N|bounded:inf)");
}

std::string RunMode::to_string() const {
  switch (kind) {
    case ModeKind::Etta: return "etta";
    case ModeKind::AdaptiveOnly: return "adaptive";
    case ModeKind::RecursiveOnly: return "recursive";
    case ModeKind::SimpleEnsemble: return "simple";
    case ModeKind::Bounded: return capacity ? "bounded:" + std::to_string(*capacity) : "bounded:inf";
  }
  return "etta";
}

LabelSource parse_label_source(const std::string& text) {
  if (text == "pseudo") return LabelSource::Pseudo;
  if (text == "oracle") return LabelSource::Oracle;
  throw Error(ErrorCode::InvalidConfig, "unknown label source \"" + text + "\" (expected pseudo|oracle)");
}

std::string to_string(LabelSource source) { return source == LabelSource::Oracle ? "oracle" : "pseudo"; }

std::string to_string(FusionMode mode) { return mode == FusionMode::Fixed ? "fixed" : "adaptive"; }

void RunConfig::validate() const {
  EnsembleConfig{alpha}.validate();
  fusion.validate();
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw Error(ErrorCode::InvalidConfig, "noise sigma must be >= 0");
  }
  if (mode.kind == ModeKind::Bounded && mode.capacity && *mode.capacity < 1) {
    throw Error(ErrorCode::InvalidConfig, "bounded cache capacity must be >= 1");
  }
}

Engine::Engine(const PromptBank& bank, RunConfig cfg)
    : bank_(bank),
      cfg_(std::move(cfg)),
      ensemble_cfg_{cfg_.alpha},
      cache_(bank.num_classes, cfg_.mode.kind == ModeKind::Bounded ? cfg_.mode.capacity : std::nullopt) {
  cfg_.validate();
  if (cfg_.mode.kind == ModeKind::Etta || cfg_.mode.kind == ModeKind::RecursiveOnly) {
    states_ = init_states<double>(bank.num_classes, bank.dim());
  }
  if (cfg_.mode.kind == ModeKind::SimpleEnsemble) simple_ = simple_ensemble(bank);
  if (cfg_.mode.kind != ModeKind::SimpleEnsemble && cfg_.mode.kind != ModeKind::Bounded) gram_.emplace(bank);
}

StepResult Engine::step(const Embedding& v, std::optional<std::size_t> label) {
  if (v.size() != bank_.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "image d=" + std::to_string(v.size()) + " but bank d=" +
                                                  std::to_string(bank_.dim()));
  }
  const double tau = cfg_.fusion.temperature;
  StepResult out;

  if (cfg_.mode.kind == ModeKind::SimpleEnsemble) {
    out.adaptive = class_logits(simple_, v);
    out.recursive = out.adaptive;
    out.combined = out.adaptive;
    out.pseudo_label = out.prediction = argmax(out.adaptive);
    out.entropy_adaptive = out.entropy_recursive = entropy(out.adaptive, tau);
    return out;
  }

  // Bounded mode attends with every class's ensembled embedding; the other
  // modes only need the routed one.
  std::optional<EnsembleResult> full;
  std::vector<std::vector<std::size_t>> retained;
  if (gram_) {
    AdaptiveScores scores = adaptive_scores(bank_, *gram_, v, ensemble_cfg_);
    out.adaptive = std::move(scores.adaptive_logits);
    retained = std::move(scores.retained_indices);
  } else {
    full = adaptive_step(bank_, v, ensemble_cfg_);
    out.adaptive = full->adaptive_logits;
  }
  out.pseudo_label = pseudo_label(out.adaptive);
  if (cfg_.label_source == LabelSource::Oracle && label) out.pseudo_label = *label;
  const std::size_t route = out.pseudo_label;

  switch (cfg_.mode.kind) {
    case ModeKind::AdaptiveOnly:
      out.recursive = out.adaptive;
      out.combined = out.adaptive;
      out.prediction = argmax(out.adaptive);
      out.entropy_adaptive = out.entropy_recursive = entropy(out.adaptive, tau);
      out.weight_adaptive = 1.0;
      return out;
    case ModeKind::Etta:
    case ModeKind::RecursiveOnly:
      absorb(states_[route], ensemble_rows(bank_.class_block(route), retained[route]), v);
      out.recursive = recursive_logits<double>(states_, v, out.adaptive);
      break;
    case ModeKind::Bounded:
      cache_.insert(route, v, -entropy(out.adaptive, tau));
      out.recursive = cross_attention_logits<double>(cache_, full->ensembled, v, out.adaptive);
      break;
    case ModeKind::SimpleEnsemble:
      break;
  }

  if (cfg_.mode.kind == ModeKind::RecursiveOnly) {
    out.combined = out.recursive;
    out.prediction = argmax(out.recursive);
    out.entropy_adaptive = entropy(out.adaptive, tau);
    out.entropy_recursive = entropy(out.recursive, tau);
    out.weight_adaptive = 0.0;
    return out;
  }

  auto fused = fuse(out.adaptive, out.recursive, cfg_.fusion);
  out.combined = std::move(fused.combined);
  out.prediction = fused.prediction;
  out.entropy_adaptive = fused.entropy_adaptive;
  out.entropy_recursive = fused.entropy_recursive;
  out.weight_adaptive = fused.weight_adaptive;
  return out;
}

std::size_t Engine::state_memory_bytes() const {
  switch (cfg_.mode.kind) {
    case ModeKind::Etta:
    case ModeKind::RecursiveOnly:
      return etta::state_memory_bytes<double>(states_);
    case ModeKind::Bounded:
      return cache_.memory_bytes();
    default:
      return 0;
  }
}

}  // namespace etta
