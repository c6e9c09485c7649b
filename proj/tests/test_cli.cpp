// End-to-end exercise of the command-line surface: simulate -> train ->
// evaluate -> vimp -> gvimp -> depth -> predict, plus exit-code checks.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = LMFOREST_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("lmf_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("cli pipeline on simulated data") {
  TempDir tmp;
  const std::string data = (tmp.path / "data").string();
  const std::string run_dir = (tmp.path / "run").string();

  REQUIRE(run("simulate --out " + data + " --subjects 60 --seed 4") == 0);
  for (const char* f : {"longitudinal.csv", "fixed.csv", "outcome.csv",
                        "truth.csv", "config.json"}) {
    CHECK(fs::exists(fs::path(data) / f));
  }

  const std::string cfg = (fs::path(data) / "config.json").string();
  REQUIRE(run("train --config " + cfg + " --out " + run_dir +
              " --ntree 10 --mtry 10 --nodesize 4 --seed 7 --threads 2") ==
          0);
  const std::string model = (fs::path(run_dir) / "model.json").string();
  REQUIRE(fs::exists(model));
  CHECK(slurp(fs::path(run_dir) / "summary.txt")
            .find("continuous outcome") != std::string::npos);

  // determinism: retrain with the same seed gives a byte-identical model
  const std::string run2 = (tmp.path / "run2").string();
  REQUIRE(run("train --config " + cfg + " --out " + run2 +
              " --ntree 10 --mtry 10 --nodesize 4 --seed 7 --threads 1") ==
          0);
  CHECK(slurp(model) == slurp(fs::path(run2) / "model.json"));

  REQUIRE(run("evaluate --config " + cfg + " --model " + model + " --out " +
              (tmp.path / "eval").string() + " --threads 2") == 0);
  CHECK(slurp(tmp.path / "eval" / "oob.csv").find("mean") !=
        std::string::npos);

  REQUIRE(run("vimp --config " + cfg + " --model " + model + " --out " +
              (tmp.path / "vimp").string() +
              " --perm-seed 3 --pct --threads 2") == 0);
  CHECK(slurp(tmp.path / "vimp" / "vimp.csv").find("marker1") !=
        std::string::npos);

  // add a groups block for gvimp; keep the config beside the data files
  // because relative paths resolve against the config's directory
  {
    std::ifstream in(cfg);
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    const auto pos = text.rfind('}');
    text.insert(pos - 1,
                ",\n  \"groups\": {\"informative\": [\"marker1\", "
                "\"marker2\"], \"rest\": [\"marker3\", \"marker4\"]}\n");
    std::ofstream out((fs::path(data) / "config_groups.json").string());
    out << text;
  }
  REQUIRE(run("gvimp --config " +
              (fs::path(data) / "config_groups.json").string() +
              " --model " + model + " --out " +
              (tmp.path / "gvimp").string() + " --perm-seed 3") == 0);
  CHECK(slurp(tmp.path / "gvimp" / "gvimp.csv").find("informative") !=
        std::string::npos);

  REQUIRE(run("depth --model " + model + " --out " +
              (tmp.path / "depth").string()) == 0);
  CHECK(slurp(tmp.path / "depth" / "depth_feature.csv").find("marker1.bi0") !=
        std::string::npos);

  REQUIRE(run("predict --model " + model + " --time-data " +
              (fs::path(data) / "longitudinal.csv").string() +
              " --fixed-data " + (fs::path(data) / "fixed.csv").string() +
              " --out " + (tmp.path / "pred").string() + " --threads 2") ==
          0);
  const std::string pred = slurp(tmp.path / "pred" / "pred_indiv.csv");
  CHECK(pred.find("id,pred") == 0);
  CHECK(fs::exists(tmp.path / "pred" / "pred_leaf.csv"));
}

TEST_CASE("cli factor mode and survival cause validation") {
  TempDir tmp;
  // small two-marker factor dataset written by hand
  std::ofstream lcsv(tmp.path / "long.csv");
  std::ofstream fcsv(tmp.path / "fixed.csv");
  std::ofstream ycsv(tmp.path / "y.csv");
  std::ofstream scsv(tmp.path / "surv.csv");
  lcsv << "id,time,m1\n";
  fcsv << "id,age\n";
  ycsv << "id,group\n";
  scsv << "id,years,event\n";
  unsigned state = 12345;
  auto next = [&] {
    state = state * 1103515245u + 12345u;
    return double((state >> 16) & 0x7fff) / 32768.0;
  };
  for (int i = 0; i < 40; ++i) {
    const double shift = i % 2 == 0 ? 1.5 : -1.5;
    for (int k = 0; k < 3; ++k) {
      lcsv << i << "," << k << "," << (shift + next()) << "\n";
    }
    fcsv << i << "," << (50 + 10 * next()) << "\n";
    ycsv << i << "," << (i % 2 == 0 ? "hi" : "lo") << "\n";
    scsv << i << "," << (0.5 + 3 * next()) << "," << (i % 3) << "\n";
  }
  lcsv.close();
  fcsv.close();
  ycsv.close();
  scsv.close();

  std::ofstream cfg(tmp.path / "factor.json");
  cfg << R"({
    "longitudinal": {"path": "long.csv", "markers": ["m1"],
                     "models": {"m1": {"fixed": [0,1], "random": [0,1]}}},
    "fixed": {"path": "fixed.csv", "numeric": ["age"]},
    "outcome": {"path": "y.csv", "type": "factor", "value": "group"},
    "hyperparams": {"ntree": 8, "mtry": 2, "nodesize": 3, "seed": 2}
  })";
  cfg.close();

  const std::string run_dir = (tmp.path / "frun").string();
  REQUIRE(run("train --config " + (tmp.path / "factor.json").string() +
              " --out " + run_dir) == 0);
  CHECK(slurp(fs::path(run_dir) / "summary.txt")
            .find("categorical outcome") != std::string::npos);

  REQUIRE(run("predict --model " + run_dir + "/model.json --time-data " +
              (tmp.path / "long.csv").string() + " --fixed-data " +
              (tmp.path / "fixed.csv").string() + " --out " +
              (tmp.path / "fpred").string()) == 0);
  const std::string pred = slurp(tmp.path / "fpred" / "pred_indiv.csv");
  CHECK(pred.find("id,pred,proba") == 0);
  CHECK((pred.find(",hi,") != std::string::npos ||
         pred.find(",lo,") != std::string::npos));

  // survival with two causes and no declared cause of interest
  std::ofstream scfg(tmp.path / "surv.json");
  scfg << R"({
    "longitudinal": {"path": "long.csv", "markers": ["m1"],
                     "models": {"m1": {"fixed": [0,1], "random": [0,1]}}},
    "fixed": {"path": "fixed.csv", "numeric": ["age"]},
    "outcome": {"path": "surv.csv", "type": "surv",
                "time": "years", "event": "event"},
    "hyperparams": {"ntree": 4, "mtry": 2, "nodesize": 3, "seed": 2}
  })";
  scfg.close();
  CHECK(run("train --config " + (tmp.path / "surv.json").string() +
            " --out " + (tmp.path / "srun").string()) == 2);
  // declaring the cause on the command line fixes it
  CHECK(run("train --config " + (tmp.path / "surv.json").string() +
            " --out " + (tmp.path / "srun").string() + " --cause 2") == 0);
}

TEST_CASE("cli simulate is byte-deterministic") {
  TempDir tmp;
  REQUIRE(run("simulate --out " + (tmp.path / "a").string() +
              " --subjects 25 --seed 9") == 0);
  REQUIRE(run("simulate --out " + (tmp.path / "b").string() +
              " --subjects 25 --seed 9") == 0);
  for (const char* f : {"longitudinal.csv", "fixed.csv", "outcome.csv",
                        "truth.csv"}) {
    CHECK(slurp(tmp.path / "a" / f) == slurp(tmp.path / "b" / f));
  }
}

TEST_CASE("cli exit codes") {
  TempDir tmp;
  // missing config file: validation error
  CHECK(run("train --config /nonexistent.json --out " +
            (tmp.path / "x").string()) == 2);
  // bad simulate parameters: validation error
  CHECK(run("simulate --out " + (tmp.path / "y").string() +
            " --subjects 0") == 2);
  // unusable model path: validation error
  CHECK(run("depth --model /nonexistent/model.json --out " +
            (tmp.path / "z").string()) == 2);
}
