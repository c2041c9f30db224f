#include "etta/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <iterator>
#include <string>

#include "json.hpp"

namespace etta {

namespace {

constexpr char kBankMagic[4] = {'E', 'T', 'E', 'B'};
constexpr char kStreamMagic[4] = {'E', 'T', 'E', 'S'};

template <typename T>
T byteswap_if_big(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  } else {
    return value;
  }
}

template <typename T>
T decode(const char* p) {
  T value;
  std::memcpy(&value, p, sizeof(T));
  return byteswap_if_big(value);
}

template <typename T>
void encode(std::string& out, T value) {
  value = byteswap_if_big(value);
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

Error file_error(ErrorCode code, const std::filesystem::path& path, const std::string& what,
                 std::optional<std::uint64_t> offset = std::nullopt) {
  std::string msg = path.string() + ": " + what;
  if (offset) msg += " at byte offset " + std::to_string(*offset);
  Error e(code, msg);
  e.offset = offset;
  return e;
}

// Bounds-checked cursor over an in-memory file image.
class Cursor {
 public:
  Cursor(const std::string& data, const std::filesystem::path& path) : data_(data), path_(path) {}

  const char* take(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw file_error(ErrorCode::TruncatedFile, path_, std::string("file ends inside ") + what, pos_);
    }
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  template <typename T>
  T read(const char* what) {
    return decode<T>(take(sizeof(T), what));
  }

  std::size_t position() const noexcept { return pos_; }

 private:
  const std::string& data_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw file_error(ErrorCode::Io, path, "cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw file_error(ErrorCode::Io, path, "cannot open for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw file_error(ErrorCode::Io, path, "write failed");
}

void check_magic(const char* got, const char (&want)[4], const std::filesystem::path& path) {
  if (std::memcmp(got, want, 4) != 0) {
    throw file_error(ErrorCode::BadMagic, path,
                     "expected magic \"" + std::string(want, 4) + "\", found \"" + std::string(got, 4) + "\"", 0);
  }
}

std::vector<std::string> string_array(const nlohmann::json& j, const std::filesystem::path& path, const char* key) {
  if (!j.is_array()) throw file_error(ErrorCode::BadMetadata, path, std::string("metadata \"") + key + "\" is not an array");
  std::vector<std::string> out;
  for (const auto& item : j) {
    if (!item.is_string()) {
      throw file_error(ErrorCode::BadMetadata, path, std::string("metadata \"") + key + "\" holds a non-string");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

std::string bank_metadata(const PromptBank& bank) {
  nlohmann::json meta;
  meta["classes"] = bank.class_names;
  if (bank.class_specific_templates) {
    auto nested = nlohmann::json::array();
    for (std::size_t i = 0; i < bank.num_classes; ++i) {
      auto row = nlohmann::json::array();
      for (std::size_t k = 0; k < bank.num_templates; ++k) row.push_back(bank.template_texts[i * bank.num_templates + k]);
      nested.push_back(std::move(row));
    }
    meta["templates"] = std::move(nested);
  } else {
    meta["templates"] = bank.template_texts;
  }
  return meta.dump();
}

}  // namespace

PromptBank load_prompt_bank(const std::filesystem::path& path, double tolerance) {
  const std::string data = read_file(path);
  Cursor cur(data, path);

  check_magic(cur.take(4, "magic"), kBankMagic, path);
  const auto version = cur.read<std::uint32_t>("version");
  if (version != kFormatVersion) {
    throw file_error(ErrorCode::VersionUnsupported, path, "version " + std::to_string(version), 4);
  }
  const auto d = cur.read<std::uint32_t>("header");
  const auto C = cur.read<std::uint32_t>("header");
  const auto T = cur.read<std::uint32_t>("header");
  if (d < 1 || C < 2 || T < 1) {
    throw file_error(ErrorCode::BadMetadata, path,
                     "invalid header d=" + std::to_string(d) + " C=" + std::to_string(C) + " T=" + std::to_string(T), 8);
  }

  const std::uint64_t rows = std::uint64_t(C) * T;
  if (rows > data.size() / (std::uint64_t(d) * sizeof(float))) {
    throw file_error(ErrorCode::TruncatedFile, path, "file ends inside embeddings", cur.position());
  }
  const char* floats = cur.take(std::size_t(rows * d * sizeof(float)), "embeddings");

  PromptBank bank;
  bank.num_classes = C;
  bank.num_templates = T;
  bank.embeddings.resize(Eigen::Index(rows), Eigen::Index(d));
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint32_t j = 0; j < d; ++j) {
      bank.embeddings(Eigen::Index(r), Eigen::Index(j)) = decode<float>(floats + (r * d + j) * sizeof(float));
    }
    auto row = bank.embeddings.row(Eigen::Index(r));
    if (!is_unit_norm(row, tolerance)) {
      const double norm = row.norm();
      if (!(norm >= kZeroNormThreshold)) {
        throw file_error(ErrorCode::ZeroVector, path, "bank row " + std::to_string(r) + " is zero");
      }
      row /= norm;
      ++bank.normalization_warnings;
    }
  }

  const auto meta_len = cur.read<std::uint64_t>("metadata length");
  if (meta_len > data.size() - cur.position()) {
    throw file_error(ErrorCode::TruncatedFile, path, "file ends inside metadata", cur.position());
  }
  std::string meta_text(cur.take(std::size_t(meta_len), "metadata"), std::size_t(meta_len));

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw file_error(ErrorCode::BadMetadata, path, std::string("metadata is not JSON: ") + e.what());
  }
  if (!meta.is_object() || !meta.contains("classes") || !meta.contains("templates")) {
    throw file_error(ErrorCode::BadMetadata, path, "metadata needs \"classes\" and \"templates\"");
  }
  bank.class_names = string_array(meta["classes"], path, "classes");
  if (bank.class_names.size() != C) {
    throw file_error(ErrorCode::DimMismatchWithMetadata, path,
                     "header says C=" + std::to_string(C) + ", metadata lists " +
                         std::to_string(bank.class_names.size()) + " classes");
  }
  const auto& templates = meta["templates"];
  if (templates.is_array() && !templates.empty() && templates.front().is_array()) {
    if (templates.size() != C) {
      throw file_error(ErrorCode::DimMismatchWithMetadata, path, "class-specific templates need one list per class");
    }
    for (const auto& per_class : templates) {
      auto texts = string_array(per_class, path, "templates");
      if (texts.size() != T) {
        throw file_error(ErrorCode::DimMismatchWithMetadata, path,
                         "header says T=" + std::to_string(T) + ", a class lists " + std::to_string(texts.size()));
      }
      bank.template_texts.insert(bank.template_texts.end(), texts.begin(), texts.end());
    }
    bank.class_specific_templates = true;
  } else {
    bank.template_texts = string_array(templates, path, "templates");
    if (bank.template_texts.size() == std::size_t(C) * T && T != bank.template_texts.size()) {
      bank.class_specific_templates = true;
    } else if (bank.template_texts.size() != T) {
      throw file_error(ErrorCode::DimMismatchWithMetadata, path,
                       "header says T=" + std::to_string(T) + ", metadata lists " +
                           std::to_string(bank.template_texts.size()) + " templates");
    }
  }
  bank.raw_metadata = std::move(meta_text);
  return bank;
}

void write_prompt_bank(const PromptBank& bank, const std::filesystem::path& path) {
  const auto rows = bank.embeddings.rows();
  const auto d = bank.embeddings.cols();
  if (std::size_t(rows) != bank.num_classes * bank.num_templates) {
    throw Error(ErrorCode::DimensionMismatch, "bank rows do not match C*T");
  }
  std::string out;
  out.reserve(24 + std::size_t(rows * d) * sizeof(float) + 8);
  out.append(kBankMagic, 4);
  encode<std::uint32_t>(out, kFormatVersion);
  encode<std::uint32_t>(out, std::uint32_t(d));
  encode<std::uint32_t>(out, std::uint32_t(bank.num_classes));
  encode<std::uint32_t>(out, std::uint32_t(bank.num_templates));
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index j = 0; j < d; ++j) encode<float>(out, float(bank.embeddings(r, j)));
  }
  const std::string meta = bank.raw_metadata ? *bank.raw_metadata : bank_metadata(bank);
  encode<std::uint64_t>(out, meta.size());
  out += meta;
  write_file(path, out);
}

StreamReader::StreamReader(const std::filesystem::path& path, double tolerance)
    : path_(path), in_(path, std::ios::binary), tolerance_(tolerance) {
  if (!in_) throw file_error(ErrorCode::Io, path_, "cannot open for reading");
  char header[20];
  in_.read(header, sizeof(header));
  const auto got = std::size_t(in_.gcount());
  if (got < 4) throw file_error(ErrorCode::TruncatedFile, path_, "file ends inside magic", got);
  check_magic(header, kStreamMagic, path_);
  if (got < 8) throw file_error(ErrorCode::TruncatedFile, path_, "file ends inside header", got);
  const auto version = decode<std::uint32_t>(header + 4);
  if (version != kFormatVersion) {
    throw file_error(ErrorCode::VersionUnsupported, path_, "version " + std::to_string(version), 4);
  }
  if (got < sizeof(header)) throw file_error(ErrorCode::TruncatedFile, path_, "file ends inside header", got);
  dim_ = decode<std::uint32_t>(header + 8);
  count_ = decode<std::uint64_t>(header + 12);
  if (dim_ < 1) throw file_error(ErrorCode::BadMetadata, path_, "stream dimension is zero", 8);
  offset_ = sizeof(header);
  record_.resize(sizeof(std::int32_t) + std::size_t(dim_) * sizeof(float));
}

std::optional<StreamSample> StreamReader::next() {
  if (read_ == count_) return std::nullopt;
  in_.read(record_.data(), std::streamsize(record_.size()));
  if (std::size_t(in_.gcount()) != record_.size()) {
    throw file_error(ErrorCode::TruncatedRecord, path_,
                     "record " + std::to_string(read_) + " of " + std::to_string(count_) + " is cut short", offset_);
  }
  const auto label = decode<std::int32_t>(record_.data());
  if (label < -1) {
    throw file_error(ErrorCode::BadMetadata, path_, "label " + std::to_string(label) + " is invalid", offset_);
  }
  Vector<double> raw(dim_);
  for (std::uint32_t j = 0; j < dim_; ++j) {
    raw[j] = decode<float>(record_.data() + sizeof(std::int32_t) + j * sizeof(float));
  }

  StreamSample sample;
  sample.index = read_;
  if (label >= 0) sample.label = std::size_t(label);
  if (is_unit_norm(raw, tolerance_)) {
    sample.embedding = Embedding::trusted(std::move(raw));
  } else {
    try {
      sample.embedding = normalize(raw);
    } catch (Error&) {
      throw file_error(ErrorCode::ZeroVector, path_, "record " + std::to_string(read_) + " is a zero vector", offset_);
    }
    ++warnings_;
  }
  offset_ += record_.size();
  ++read_;
  return sample;
}

std::vector<StreamSample> load_stream(const std::filesystem::path& path, double tolerance) {
  StreamReader reader(path, tolerance);
  std::vector<StreamSample> out;
  out.reserve(std::size_t(std::min<std::uint64_t>(reader.size(), 1u << 20)));
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

void write_stream(std::span<const StreamSample> samples, std::uint32_t dim, const std::filesystem::path& path) {
  std::string out;
  out.reserve(20 + samples.size() * (4 + std::size_t(dim) * 4));
  out.append(kStreamMagic, 4);
  encode<std::uint32_t>(out, kFormatVersion);
  encode<std::uint32_t>(out, dim);
  encode<std::uint64_t>(out, samples.size());
  for (const auto& s : samples) {
    if (s.embedding.size() != Eigen::Index(dim)) {
      throw Error(ErrorCode::DimensionMismatch, "sample " + std::to_string(s.index) + " has the wrong dimension");
    }
    encode<std::int32_t>(out, s.label ? std::int32_t(*s.label) : std::int32_t(-1));
    for (Eigen::Index j = 0; j < s.embedding.size(); ++j) encode<float>(out, float(s.embedding[j]));
  }
  write_file(path, out);
}

}  // namespace etta
