#include "etta/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace etta {

namespace {

std::string format_double(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, ptr);
}

nlohmann::json nullable(double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); }

template <typename Writer>
void write_to_path(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, path.string() + ": cannot open for writing");
  writer(out);
  out.flush();
  if (!out) throw Error(ErrorCode::Io, path.string() + ": write failed");
}

}  // namespace

ReportFormat parse_report_format(const std::string& text) {
  if (text == "json") return ReportFormat::Json;
  if (text == "csv") return ReportFormat::Csv;
  throw Error(ErrorCode::InvalidConfig, "unknown format \"" + text + "\" (expected json|csv)");
}

nlohmann::json to_json(const RunConfig& cfg) {
  return {
      {"alpha", cfg.alpha},
      {"temperature", cfg.fusion.temperature},
      {"fusion", to_string(cfg.fusion.mode)},
      {"beta", cfg.fusion.beta},
      {"mode", cfg.mode.to_string()},
      {"labels", to_string(cfg.label_source)},
      {"seed", cfg.seed},
      {"noise_sigma", cfg.noise_sigma},
  };
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  cfg.alpha = j.at("alpha").get<double>();
  cfg.fusion.temperature = j.at("temperature").get<double>();
  cfg.fusion.mode = j.at("fusion").get<std::string>() == "fixed" ? FusionMode::Fixed : FusionMode::Adaptive;
  cfg.fusion.beta = j.at("beta").get<double>();
  cfg.mode = RunMode::parse(j.at("mode").get<std::string>());
  cfg.label_source = parse_label_source(j.at("labels").get<std::string>());
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.noise_sigma = j.at("noise_sigma").get<double>();
  return cfg;
}

nlohmann::json to_json(const RunReport& report, const ReportOptions& opts) {
  auto samples = nlohmann::json::array();
  for (const auto& s : report.per_sample) {
    samples.push_back({
        {"index", s.index},
        {"pseudo_label", s.pseudo_label},
        {"prediction", s.prediction},
        {"correct", s.correct ? nlohmann::json(*s.correct) : nlohmann::json(nullptr)},
        {"entropy_adaptive", s.entropy_adaptive},
        {"entropy_recursive", s.entropy_recursive},
        {"weight_adaptive", s.weight_adaptive},
    });
  }
  nlohmann::json j = {
      {"config", to_json(report.config)},
      {"top1_accuracy", report.top1_accuracy ? nlohmann::json(*report.top1_accuracy) : nlohmann::json(nullptr)},
      {"num_samples", report.per_sample.size()},
      {"num_labeled", report.num_labeled},
      {"state_memory_bytes", report.state_memory_bytes},
      {"per_sample", std::move(samples)},
  };
  if (opts.include_timing) j["wall_time_per_sample"] = report.wall_time_per_sample;
  return j;
}

RunReport run_report_from_json(const nlohmann::json& j) {
  RunReport report;
  report.config = run_config_from_json(j.at("config"));
  if (!j.at("top1_accuracy").is_null()) report.top1_accuracy = j.at("top1_accuracy").get<double>();
  report.num_labeled = j.at("num_labeled").get<std::size_t>();
  report.state_memory_bytes = j.at("state_memory_bytes").get<std::size_t>();
  report.wall_time_per_sample = j.value("wall_time_per_sample", 0.0);
  for (const auto& s : j.at("per_sample")) {
    SampleRecord rec;
    rec.index = s.at("index").get<std::uint64_t>();
    rec.pseudo_label = s.at("pseudo_label").get<std::size_t>();
    rec.prediction = s.at("prediction").get<std::size_t>();
    if (!s.at("correct").is_null()) rec.correct = s.at("correct").get<bool>();
    rec.entropy_adaptive = s.at("entropy_adaptive").get<double>();
    rec.entropy_recursive = s.at("entropy_recursive").get<double>();
    rec.weight_adaptive = s.at("weight_adaptive").get<double>();
    report.per_sample.push_back(rec);
  }
  return report;
}

nlohmann::json to_json(const SweepTable& table, const RunConfig& cfg) {
  auto cells = nlohmann::json::array();
  for (const auto& cell : table.cells) {
    nlohmann::json c = {{"mode", cell.mode}};
    for (std::size_t p = 0; p < table.param_names.size(); ++p) {
      c[table.param_names[p]] = p < cell.params.size() ? nullable(cell.params[p]) : nlohmann::json(nullptr);
    }
    c["accuracy"] = cell.accuracy ? nlohmann::json(*cell.accuracy) : nlohmann::json(nullptr);
    cells.push_back(std::move(c));
  }
  return {{"sweep", table.name}, {"config", to_json(cfg)}, {"cells", std::move(cells)}};
}

void write_report(const RunReport& report, ReportFormat format, std::ostream& out, const ReportOptions& opts) {
  if (format == ReportFormat::Json) {
    out << to_json(report, opts).dump(2) << '\n';
    return;
  }
  out << "index,pseudo_label,prediction,correct,entropy_adaptive,entropy_recursive,weight_adaptive\n";
  for (const auto& s : report.per_sample) {
    out << s.index << ',' << s.pseudo_label << ',' << s.prediction << ','
        << (s.correct ? (*s.correct ? "1" : "0") : "") << ',' << format_double(s.entropy_adaptive) << ','
        << format_double(s.entropy_recursive) << ',' << format_double(s.weight_adaptive) << '\n';
  }
}

void write_table(const SweepTable& table, const RunConfig& cfg, ReportFormat format, std::ostream& out) {
  if (format == ReportFormat::Json) {
    out << to_json(table, cfg).dump(2) << '\n';
    return;
  }
  out << "mode";
  for (const auto& name : table.param_names) out << ',' << name;
  out << ",accuracy\n";
  for (const auto& cell : table.cells) {
    out << cell.mode;
    for (std::size_t p = 0; p < table.param_names.size(); ++p) {
      out << ',' << (p < cell.params.size() ? format_double(cell.params[p]) : "");
    }
    out << ',' << (cell.accuracy ? format_double(*cell.accuracy) : "") << '\n';
  }
}

void emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& path,
                 const ReportOptions& opts) {
  write_to_path(path, [&](std::ostream& out) { write_report(report, format, out, opts); });
}

void emit_table(const SweepTable& table, const RunConfig& cfg, ReportFormat format, const std::filesystem::path& path) {
  write_to_path(path, [&](std::ostream& out) { write_table(table, cfg, format, out); });
}

}  // namespace etta
