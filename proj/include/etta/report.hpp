#ifndef ETTA_REPORT_HPP
#define ETTA_REPORT_HPP

#include <filesystem>
#include <ostream>
#include <string>

#include "json.hpp"

#include "etta/harness.hpp"

namespace etta {

enum class ReportFormat { Json, Csv };

ReportFormat parse_report_format(const std::string& text);

struct ReportOptions {
  // Wall-clock fields are the only non-deterministic part of a report.
  bool include_timing = true;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RunReport& report, const ReportOptions& opts = {});
RunReport run_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SweepTable& table, const RunConfig& cfg);

void write_report(const RunReport& report, ReportFormat format, std::ostream& out, const ReportOptions& opts = {});
void write_table(const SweepTable& table, const RunConfig& cfg, ReportFormat format, std::ostream& out);

/// Writes to `path`; IO failures raise ErrorCode::Io naming the path.
void emit_report(const RunReport& report, ReportFormat format, const std::filesystem::path& path,
                 const ReportOptions& opts = {});
void emit_table(const SweepTable& table, const RunConfig& cfg, ReportFormat format, const std::filesystem::path& path);

}  // namespace etta

#endif  // ETTA_REPORT_HPP
