#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

#include "test_util.hpp"

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ETTA_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("synth then run") {
  etta::test::TempDir dir;
  const auto bank = (dir / "bank.eteb").string();
  const auto stream = (dir / "stream.etes").string();
  REQUIRE(run_cli("synth --classes 4 --dim 16 --templates 3 --samples 120 --seed 7 --out-bank " + bank +
                  " --out-stream " + stream) == 0);

  const auto report_a = (dir / "a.json").string();
  const auto report_b = (dir / "b.json").string();
  const std::string inputs = " --bank " + bank + " --stream " + stream;
  REQUIRE(run_cli("run" + inputs + " --no-timing --out " + report_a) == 0);
  REQUIRE(run_cli("run" + inputs + " --no-timing --out " + report_b) == 0);
  CHECK(slurp(report_a) == slurp(report_b));

  const auto j = nlohmann::json::parse(slurp(report_a));
  CHECK(j.at("num_samples") == 120);
  CHECK(j.at("config").at("mode") == "etta");
  CHECK(j.at("top1_accuracy").get<double>() > 0.25);

  const auto csv = (dir / "run.csv").string();
  CHECK(run_cli("run" + inputs + " --mode bounded:4 --labels oracle --format csv --out " + csv) == 0);
  CHECK(slurp(csv).rfind("index,pseudo_label,", 0) == 0);

  SUBCASE("sweeps") {
    const auto out = (dir / "sweep.csv").string();
    REQUIRE(run_cli("sweep-cache" + inputs + " --sizes 1,2 --format csv --out " + out) == 0);
    CHECK(slurp(out).rfind("mode,cache_size,accuracy\nbounded:1,1,", 0) == 0);
    REQUIRE(run_cli("sweep-alpha" + inputs + " --mode adaptive --out " + out) == 0);
    CHECK(nlohmann::json::parse(slurp(out)).at("cells").size() == 10);
    REQUIRE(run_cli("sweep-beta" + inputs + " --betas 0,1 --out " + out) == 0);
    CHECK(nlohmann::json::parse(slurp(out)).at("cells").size() == 3);
    REQUIRE(run_cli("noise" + inputs + " --sigmas 0,0.5 --sizes 1 --out " + out) == 0);
    CHECK(nlohmann::json::parse(slurp(out)).at("cells").size() == 4);
  }

  SUBCASE("bad configuration exits 2") {
    CHECK(run_cli("run" + inputs + " --alpha 0") == 2);
    CHECK(run_cli("run" + inputs + " --mode tda") == 2);
    CHECK(run_cli("run" + inputs + " --format xml") == 2);
    CHECK(run_cli("run" + inputs + " --beta 2") == 2);
    CHECK(run_cli("run --bank " + bank) == 2);
    CHECK(run_cli("frobnicate") == 2);
  }

  SUBCASE("bad input files exit 3") {
    CHECK(run_cli("run --bank " + stream + " --stream " + stream) == 3);
    CHECK(run_cli("run --bank " + bank + " --stream " + (dir / "missing.etes").string()) == 3);
    const auto truncated = (dir / "truncated.etes").string();
    const std::string bytes = slurp(stream);
    std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() - 5);
    CHECK(run_cli("run --bank " + bank + " --stream " + truncated) == 3);
  }

  SUBCASE("unwritable output exits 3") {
    CHECK(run_cli("run" + inputs + " --out " + (dir / "nope/x.json").string()) == 3);
  }
}
