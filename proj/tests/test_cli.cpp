#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "irrigation/predictor.hpp"

using namespace irrigation;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run irrigctl(const std::string& args) {
  const std::string cmd = std::string(IRRIGCTL_PATH) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (fgets(buf.data(), int(buf.size()), pipe)) r.out += buf.data();
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "irrigation_cli_tests";
  fs::create_directories(dir);
  return dir;
}

void write_small_config(const fs::path& path, const fs::path& out) {
  std::ofstream(path) << R"({
  "season_days": 20,
  "output_dir": ")" << out.string() << R"(",
  "weather": {"training_seasons": 2},
  "trainer": {"hidden": [16], "max_iterations": 3, "workers": 1,
              "episodes_per_worker": 2, "normalization_episodes": 2}
})";
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  CHECK(irrigctl("").status == 2);
  CHECK(irrigctl("frobnicate").status == 2);
  CHECK(irrigctl("compare --bogus-flag").status == 2);
  CHECK(irrigctl("evaluate").status == 2);
  CHECK(irrigctl("identify --input /no/such/file.csv").status == 2);
  CHECK(irrigctl("compare --reward sometimes").status == 2);
}

TEST_CASE("help exits cleanly") {
  const Run r = irrigctl("--help");
  CHECK(r.status == 0);
  for (const char* sub : {"identify", "train", "evaluate", "compare",
                          "synth-weather"}) {
    CHECK(r.out.find(sub) != std::string::npos);
  }
}

TEST_CASE("runtime errors exit with status 1") {
  const fs::path bad = scratch() / "bad_obs.csv";
  std::ofstream(bad) << "v_t,a_t,p_t,e_t,v_next\n1,2,oops,4,5\n";
  const Run r = irrigctl("identify --input " + bad.string());
  CHECK(r.status == 1);
  CHECK(r.out.find("error:") != std::string::npos);
}

TEST_CASE("identify fits a logged observation file") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const PredictorModel truth = PredictorModel::tree2();
  std::vector<ObservationRow> rows;
  for (int k = 0; k < 40; ++k) {
    ObservationRow r{3.0 + 4.0 * u(rng), 2.0 * u(rng), 0.0, 0.5 + u(rng), 0.0};
    r.v_next = predict_next(truth, r.v_t, r.a_t, r.p_t, r.e_t);
    rows.push_back(r);
  }
  const fs::path file = scratch() / "obs.csv";
  write_observations_csv(file, rows);
  const Run r = irrigctl("identify --input " + file.string());
  CHECK(r.status == 0);
  CHECK(r.out.find("c1 0.9370") != std::string::npos);
  CHECK(r.out.find("c2 0.3250") != std::string::npos);
  CHECK(r.out.find("c3 -0.1210") != std::string::npos);
  CHECK(r.out.find("R2 1.0000") != std::string::npos);
}

double printed(const std::string& out, const std::string& key) {
  const auto pos = out.find(key + " ");
  REQUIRE(pos != std::string::npos);
  return std::stod(out.substr(pos + key.size() + 1));
}

TEST_CASE("identify on a synthesized Tree2 log recovers its coefficients") {
  const Run r = irrigctl("identify --region 1");
  REQUIRE(r.status == 0);
  const PredictorModel t2 = PredictorModel::tree2();
  CHECK(std::abs(printed(r.out, "c1") - t2.c1) <= 0.05);
  CHECK(std::abs(printed(r.out, "c2") - t2.c2) <= 0.05);
  CHECK(std::abs(printed(r.out, "c3") - t2.c3) <= 0.05);
  CHECK(printed(r.out, "R2") > 0.95);
  CHECK(printed(r.out, "NRMSE") < 0.1);
}

TEST_CASE("synth-weather writes a season") {
  const fs::path out = scratch() / "weather";
  const Run r = irrigctl("synth-weather --days 10 --out " + out.string());
  CHECK(r.status == 0);
  std::ifstream in(out / "weather.csv");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 12);  // header + 11 records
}

TEST_CASE("compare prints the table and writes results") {
  const fs::path out = scratch() / "compare";
  fs::remove_all(out);
  const fs::path cfg = scratch() / "small.json";
  write_small_config(cfg, out);
  const Run r = irrigctl("compare --config " + cfg.string());
  REQUIRE(r.status == 0);
  for (const char* col : {"controller", "savings_vs_ET", "days_below_mad",
                          "trigger_days", "ET", "sensor", "DRLIC_MAD",
                          "DRLIC_noshield"}) {
    CHECK(r.out.find(col) != std::string::npos);
  }
  CHECK(fs::exists(out / "daily.csv"));
  CHECK(fs::exists(out / "summary.csv"));
  CHECK(fs::exists(out / "manifest.json"));
}

TEST_CASE("compare on the default config lists the full roster") {
  const fs::path out = scratch() / "default";
  fs::remove_all(out);
  const Run r = irrigctl("compare --out " + out.string());
  REQUIRE(r.status == 0);
  for (const char* row : {"ET ", "sensor ", "DRLIC ", "DRLIC_MAD ",
                          "DRLIC_noshield "}) {
    CHECK(r.out.find(std::string("\n") + row) != std::string::npos);
  }
  for (const char* col : {"water", "savings_vs_ET", "days_below_mad",
                          "trigger_days"}) {
    CHECK(r.out.find(col) != std::string::npos);
  }
}

TEST_CASE("train then evaluate with the saved policy") {
  const fs::path out = scratch() / "train";
  fs::remove_all(out);
  const fs::path cfg = scratch() / "small_train.json";
  write_small_config(cfg, out);
  const Run t = irrigctl("train --config " + cfg.string());
  REQUIRE(t.status == 0);
  CHECK(fs::exists(out / "policy.bin"));
  CHECK(fs::exists(out / "curve.csv"));
  const Run e = irrigctl("evaluate --config " + cfg.string() +
                         " --controller DRLIC --policy " +
                         (out / "policy.bin").string());
  CHECK(e.status == 0);
  CHECK(e.out.find("DRLIC") != std::string::npos);
}
