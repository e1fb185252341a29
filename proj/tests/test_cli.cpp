#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(COUGHTB_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Simulated once; shared by the cases below.
const fs::path& cohort() {
  static const fs::path dir = [] {
    const fs::path d = testing::tmp_dir("cli_cohort");
    REQUIRE(run("simulate --out " + d.string() + " --sizes 8,6,6 --sessions 1 --no-phone --seed 3") == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("exit status separates config, data and usage errors") {
  const fs::path m = cohort() / "manifest.json";
  const fs::path out = testing::tmp_dir("cli_errors");
  CHECK(run("evaluate --manifest " + m.string() + " --out " + out.string() + " --duration 7") == 2);
  CHECK(run("evaluate --manifest " + m.string() + " --out " + out.string() + " --thresholds 0.5,0.4") == 2);
  CHECK(run("evaluate --manifest " + m.string() + " --out " + out.string() + " --device tablet") == 2);
  CHECK(run("evaluate --bogus-flag") == 2);
  CHECK(run("evaluate --out " + out.string()) == 2);
  CHECK(run("evaluate --manifest /nonexistent/manifest.json --out " + out.string()) == 3);

  std::ofstream(out / "bad.json") << R"({"schema_version": 1, "participants": [], "recordings": []})";
  CHECK(run("evaluate --manifest " + (out / "bad.json").string() + " --out " + out.string()) == 3);
  std::ofstream(out / "cfg.json") << R"({"duration_s": 2, "not_a_key": 1})";
  CHECK(run("evaluate --config " + (out / "cfg.json").string()) == 2);
}

TEST_CASE("replaying run metadata reproduces the report byte for byte") {
  const fs::path m = cohort() / "manifest.json";
  const fs::path a = testing::tmp_dir("cli_run_a");
  const fs::path b = testing::tmp_dir("cli_run_b");
  REQUIRE(run("evaluate --manifest " + m.string() + " --out " + a.string() + " --folds 3 --resamples 40 --seed 11") == 0);
  const auto meta = nlohmann::json::parse(slurp(a / "run_metadata.json"));
  CHECK(meta["command"] == "evaluate");
  CHECK(meta["config"]["seed"] == 11);
  CHECK(meta.contains("version"));
  REQUIRE(run("evaluate --config " + (a / "config.json").string() + " --out " + b.string()) == 0);
  const std::string ra = slurp(a / "report.json");
  REQUIRE(!ra.empty());
  CHECK(ra == slurp(b / "report.json"));
  CHECK(slurp(a / "predictions.csv") == slurp(b / "predictions.csv"));
}

TEST_CASE("flags override the config file") {
  const fs::path m = cohort() / "manifest.json";
  const fs::path out = testing::tmp_dir("cli_override");
  std::ofstream(out / "cfg.json") << R"({"folds": 3, "n_resamples": 20, "duration_s": 2})";
  REQUIRE(run("sweep --config " + (out / "cfg.json").string() + " --manifest " + m.string() + " --out " +
              out.string() + " --duration 1.5") == 0);
  const auto cfg = nlohmann::json::parse(slurp(out / "config.json"));
  CHECK(cfg["duration_s"] == 1.5);
  CHECK(cfg["folds"] == 3);
  CHECK(fs::exists(out / "sweep.json"));
}

TEST_CASE("train, ltas and score") {
  const fs::path m = cohort() / "manifest.json";
  const fs::path out = testing::tmp_dir("cli_train");
  REQUIRE(run("train --manifest " + m.string() + " --out " + out.string() + " --folds 3 --resamples 20") == 0);
  CHECK(fs::exists(out / "model.json"));
  REQUIRE(run("ltas --manifest " + m.string() + " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "ltas_TBpos.csv"));
  fs::path wav;
  for (const auto& e : fs::recursive_directory_iterator(cohort())) {
    if (e.path().extension() == ".wav") {
      wav = e.path();
      break;
    }
  }
  REQUIRE(!wav.empty());
  CHECK(run("score --model " + (out / "model.json").string() + " --wav " + wav.string() +
            " --age 30 --bmi 22 --symptom") == 0);
  CHECK(run("score --model " + (out / "model.json").string() + " --wav " + wav.string() + " --age 12 --bmi 22") == 2);
  CHECK(run("score --model " + (out / "model.json").string() + " --wav /nonexistent.wav --age 30 --bmi 22") == 3);
}
