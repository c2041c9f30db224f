#ifndef ETTA_IO_HPP
#define ETTA_IO_HPP

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "etta/embedding.hpp"

// Little-endian ETE containers.
//
//   bank:   "ETEB" u32 version=1 | u32 d | u32 C | u32 T | C*T*d f32 (class-major)
//           | u64 metadata length | UTF-8 JSON {"classes": [...], "templates": [...]}
//   stream: "ETES" u32 version=1 | u32 d | u64 N | N x (i32 label, d f32)
//
// A label of -1 marks an unlabeled sample.

namespace etta {

inline constexpr std::uint32_t kFormatVersion = 1;

/// Reads a bank file. Rows whose norm is off by more than `tolerance` are
/// re-normalized and counted in `normalization_warnings`.
PromptBank load_prompt_bank(const std::filesystem::path& path, double tolerance = kUnitNormTolerance);

void write_prompt_bank(const PromptBank& bank, const std::filesystem::path& path);

/// Sequential reader over a stream file.
class StreamReader {
 public:
  explicit StreamReader(const std::filesystem::path& path, double tolerance = kUnitNormTolerance);

  std::uint32_t dim() const noexcept { return dim_; }
  std::uint64_t size() const noexcept { return count_; }
  std::size_t normalization_warnings() const noexcept { return warnings_; }

  // Next sample in file order, or nullopt once all N records are read.
  std::optional<StreamSample> next();

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  double tolerance_;
  std::uint32_t dim_ = 0;
  std::uint64_t count_ = 0;
  std::uint64_t read_ = 0;
  std::uint64_t offset_ = 0;
  std::size_t warnings_ = 0;
  std::vector<char> record_;
};

std::vector<StreamSample> load_stream(const std::filesystem::path& path, double tolerance = kUnitNormTolerance);

void write_stream(std::span<const StreamSample> samples, std::uint32_t dim, const std::filesystem::path& path);

}  // namespace etta

#endif  // ETTA_IO_HPP
