#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "doctest.h"
#include "json.hpp"

#include "etta/embedding.hpp"
#include "etta/io.hpp"
#include "test_util.hpp"

using namespace etta;
using etta::test::TempDir;

namespace {

// Hand-assembled little-endian containers, independent of the writers.
struct Bytes {
  std::string data;
  template <typename T>
  Bytes& put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    data.append(b, sizeof(T));
    return *this;
  }
  Bytes& raw(const std::string& s) {
    data += s;
    return *this;
  }
  void save(const std::filesystem::path& p) const {
    std::ofstream(p, std::ios::binary).write(data.data(), std::streamsize(data.size()));
  }
};

Bytes bank_bytes(const std::string& magic, std::uint32_t version, std::uint32_t d, std::uint32_t C, std::uint32_t T,
                 const std::vector<float>& values, const std::string& meta) {
  Bytes b;
  b.raw(magic).put(version).put(d).put(C).put(T);
  for (float f : values) b.put(f);
  b.put<std::uint64_t>(meta.size()).raw(meta);
  return b;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const std::string kMeta2x1 = R"({"classes":["cat","dog"],"templates":["a photo of a"]})";

}  // namespace

TEST_CASE("normalize") {
  SUBCASE("3-4-5 triangle") {
    Vector<double> raw(2);
    raw << 3, 4;
    const auto u = normalize(raw);
    CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(std::abs(u.vec().norm() - 1.0) < 1e-6);
  }
  SUBCASE("already unit") {
    Vector<double> raw(2);
    raw << 0, 1;
    const auto u = normalize(raw);
    CHECK(u[0] == 0.0);
    CHECK(u[1] == 1.0);
  }
  SUBCASE("near-zero vector is rejected") {
    Vector<double> raw(2);
    raw << 1e-15, 0;
    try {
      normalize(raw);
      FAIL("expected ZeroVector");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ZeroVector);
    }
  }
  SUBCASE("idempotent within 1e-12") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
      Vector<double> raw(17);
      for (auto& x : raw) x = n(rng);
      const auto once = normalize(raw);
      const auto twice = normalize(once.vec());
      CHECK((once.vec() - twice.vec()).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("works for float") {
    Eigen::VectorXf raw(2);
    raw << 3, 4;
    const UnitVector<float> u = normalize(raw);
    CHECK(u[0] == doctest::Approx(0.6f));
  }
}

TEST_CASE("cosine") {
  const auto e1 = test::basis(3, 0);
  const auto e2 = test::basis(3, 1);
  CHECK(cosine(e1, e1) == 1.0);
  CHECK(cosine(e1, e2) == 0.0);
  CHECK(cosine(test::unit({0.6, 0.8}), test::unit({1, 0})) == doctest::Approx(0.6).epsilon(1e-15));

  CHECK_THROWS_AS(cosine(e1, test::basis(2, 0)), Error);

  SUBCASE("symmetric bit for bit and clamped") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 500; ++trial) {
      const auto a = test::random_unit(rng, 33);
      const auto b = test::random_unit(rng, 33);
      CHECK(cosine(a, b) == cosine(b, a));
      CHECK(std::abs(cosine(a, b)) <= 1.0);
    }
    // A slightly long vector would give a dot product above one.
    Vector<double> v(2);
    v << 1.0 + 1e-9, 0;
    CHECK(cosine(Embedding::trusted(v), test::basis(2, 0)) == 1.0);
  }
}

TEST_CASE("load_prompt_bank") {
  TempDir dir;
  const auto path = dir / "bank.ete";

  SUBCASE("reads the written rows and metadata") {
    bank_bytes("ETEB", 1, 2, 2, 1, {1, 0, 0, 1}, kMeta2x1).save(path);
    const auto bank = load_prompt_bank(path);
    CHECK(bank.num_classes == 2);
    CHECK(bank.num_templates == 1);
    CHECK(bank.dim() == 2);
    CHECK(bank.row(0, 0)[0] == 1.0);
    CHECK(bank.row(1, 0)[1] == 1.0);
    CHECK(bank.class_names == std::vector<std::string>{"cat", "dog"});
    CHECK(bank.template_texts == std::vector<std::string>{"a photo of a"});
    CHECK(bank.normalization_warnings == 0);
  }

  SUBCASE("bad magic") {
    bank_bytes("XXXX", 1, 2, 2, 1, {1, 0, 0, 1}, kMeta2x1).save(path);
    try {
      load_prompt_bank(path);
      FAIL("expected BadMagic");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadMagic);
    }
  }

  SUBCASE("unsupported version") {
    bank_bytes("ETEB", 2, 2, 2, 1, {1, 0, 0, 1}, kMeta2x1).save(path);
    try {
      load_prompt_bank(path);
      FAIL("expected VersionUnsupported");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::VersionUnsupported);
    }
  }

  SUBCASE("non-unit row is re-normalized with a warning") {
    bank_bytes("ETEB", 1, 2, 2, 1, {3, 4, 0, 1}, kMeta2x1).save(path);
    const auto bank = load_prompt_bank(path);
    CHECK(bank.row(0, 0)[0] == doctest::Approx(0.6));
    CHECK(bank.row(0, 0)[1] == doctest::Approx(0.8));
    CHECK(bank.normalization_warnings == 1);
  }

  SUBCASE("truncated embeddings") {
    auto bytes = bank_bytes("ETEB", 1, 2, 2, 1, {1, 0, 0, 1}, kMeta2x1);
    bytes.data.resize(20 + 10);
    bytes.save(path);
    try {
      load_prompt_bank(path);
      FAIL("expected TruncatedFile");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TruncatedFile);
    }
  }

  SUBCASE("truncated metadata") {
    auto bytes = bank_bytes("ETEB", 1, 2, 2, 1, {1, 0, 0, 1}, kMeta2x1);
    bytes.data.resize(bytes.data.size() - 3);
    bytes.save(path);
    CHECK_THROWS_AS(load_prompt_bank(path), Error);
  }

  SUBCASE("class count disagrees with metadata") {
    bank_bytes("ETEB", 1, 2, 2, 1, {1, 0, 0, 1}, R"({"classes":["cat"],"templates":["a"]})").save(path);
    try {
      load_prompt_bank(path);
      FAIL("expected DimMismatchWithMetadata");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DimMismatchWithMetadata);
    }
  }

  SUBCASE("template count disagrees with metadata") {
    bank_bytes("ETEB", 1, 2, 2, 1, {1, 0, 0, 1}, R"({"classes":["a","b"],"templates":["x","y","z"]})").save(path);
    try {
      load_prompt_bank(path);
      FAIL("expected DimMismatchWithMetadata");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DimMismatchWithMetadata);
    }
  }

  SUBCASE("class-specific templates") {
    bank_bytes("ETEB", 1, 2, 2, 1, {1, 0, 0, 1}, R"({"classes":["a","b"],"templates":[["a photo of a"],["b shot"]]})")
        .save(path);
    const auto bank = load_prompt_bank(path);
    CHECK(bank.class_specific_templates);
    CHECK(bank.template_texts == std::vector<std::string>{"a photo of a", "b shot"});
  }

  SUBCASE("missing file") { CHECK_THROWS_AS(load_prompt_bank(dir / "nope.ete"), Error); }
}

TEST_CASE("bank round trip is byte-identical") {
  TempDir dir;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t C = 2 + rng() % 5;
    const std::size_t T = 1 + rng() % 4;
    const Eigen::Index d = 1 + Eigen::Index(rng() % 9);
    // float32 rows, some deliberately off unit norm.
    std::vector<float> values;
    for (std::size_t r = 0; r < C * T; ++r) {
      const auto u = test::random_unit(rng, d);
      const float scale = (r % 3 == 0) ? 1.5f : 1.0f;
      for (Eigen::Index j = 0; j < d; ++j) values.push_back(float(u[j]) * scale);
    }
    nlohmann::json meta;
    std::vector<std::string> classes, templates;
    for (std::size_t i = 0; i < C; ++i) classes.push_back("class " + std::to_string(i));
    for (std::size_t k = 0; k < T; ++k) templates.push_back("template " + std::to_string(k));
    const std::string meta_text = R"({ "classes": )" + nlohmann::json(classes).dump() + R"(, "templates": )" +
                                  nlohmann::json(templates).dump() + " }";
    const auto original = dir / "orig.ete";
    bank_bytes("ETEB", 1, std::uint32_t(d), std::uint32_t(C), std::uint32_t(T), values, meta_text).save(original);

    const auto once = dir / "once.ete";
    const auto twice = dir / "twice.ete";
    const auto bank = load_prompt_bank(original);
    write_prompt_bank(bank, once);
    write_prompt_bank(load_prompt_bank(once), twice);
    CHECK(slurp(once) == slurp(twice));
    if (bank.normalization_warnings == 0) CHECK(slurp(original) == slurp(once));
  }
}

TEST_CASE("generated metadata round trips through the loader") {
  TempDir dir;
  std::mt19937_64 rng(5);
  auto bank = test::random_bank(rng, 3, 2, 4);
  bank.class_names = {"x", "y", "z"};
  write_prompt_bank(bank, dir / "b.ete");
  const auto loaded = load_prompt_bank(dir / "b.ete");
  CHECK(loaded.class_names == bank.class_names);
  CHECK(loaded.template_texts == bank.template_texts);
  CHECK((loaded.embeddings - bank.embeddings).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("load_stream") {
  TempDir dir;
  const auto path = dir / "stream.ete";
  auto header = [](std::uint32_t d, std::uint64_t n) {
    Bytes b;
    b.raw("ETES").put<std::uint32_t>(1).put(d).put(n);
    return b;
  };

  SUBCASE("one labeled sample") {
    header(2, 1).put<std::int32_t>(0).put(0.0f).put(1.0f).save(path);
    const auto samples = load_stream(path);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].label == std::optional<std::size_t>(0));
    CHECK(samples[0].embedding[1] == 1.0);
    CHECK(samples[0].index == 0);
  }

  SUBCASE("label -1 is unlabeled") {
    header(2, 2).put<std::int32_t>(-1).put(1.0f).put(0.0f).put<std::int32_t>(1).put(0.0f).put(1.0f).save(path);
    const auto samples = load_stream(path);
    REQUIRE(samples.size() == 2);
    CHECK_FALSE(samples[0].label.has_value());
    CHECK(samples[1].label == std::optional<std::size_t>(1));
    CHECK(samples[1].index == 1);
  }

  SUBCASE("empty stream") {
    header(4, 0).save(path);
    StreamReader reader(path);
    CHECK(reader.size() == 0);
    CHECK_FALSE(reader.next().has_value());
  }

  SUBCASE("record cut mid-vector reports its offset") {
    header(2, 2).put<std::int32_t>(0).put(0.0f).put(1.0f).put<std::int32_t>(1).put(0.0f).save(path);
    StreamReader reader(path);
    CHECK(reader.next().has_value());
    try {
      reader.next();
      FAIL("expected TruncatedRecord");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TruncatedRecord);
      REQUIRE(e.offset.has_value());
      CHECK(*e.offset == 20 + 12);
    }
  }

  SUBCASE("bad magic") {
    Bytes b;
    b.raw("ETEB").put<std::uint32_t>(1).put<std::uint32_t>(2).put<std::uint64_t>(0);
    b.save(path);
    try {
      StreamReader reader(path);
      FAIL("expected BadMagic");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BadMagic);
    }
  }

  SUBCASE("truncated header") {
    Bytes b;
    b.raw("ETES").put<std::uint32_t>(1).put<std::uint32_t>(2);
    b.save(path);
    try {
      StreamReader reader(path);
      FAIL("expected TruncatedFile");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::TruncatedFile);
    }
  }

  SUBCASE("write then read") {
    std::mt19937_64 rng(9);
    std::vector<StreamSample> samples;
    for (std::uint64_t t = 0; t < 25; ++t) {
      StreamSample s{test::random_unit(rng, 6), std::nullopt, t};
      if (t % 4) s.label = std::size_t(t % 3);
      samples.push_back(s);
    }
    write_stream(samples, 6, path);
    const auto loaded = load_stream(path);
    REQUIRE(loaded.size() == samples.size());
    for (std::size_t t = 0; t < samples.size(); ++t) {
      CHECK(loaded[t].label == samples[t].label);
      CHECK((loaded[t].embedding.vec() - samples[t].embedding.vec()).cwiseAbs().maxCoeff() < 1e-7);
    }
  }
}
