#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

// End-to-end checks of the command-line tool: artifact layout, determinism,
// and the documented exit codes.

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

int run(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct Workspace {
  fs::path dir;
  Workspace() {
    dir = fs::temp_directory_path() /
          ("htgnn_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "gen.json")
        << R"({"loads": [[10,10],[20,10],[10,20]], "speeds": [20, 40],)"
        << R"( "samples_per_condition": 40})";
    std::ofstream(dir / "run.json")
        << R"({"model": {"d": 6, "d_graph": 12, "lstm_hidden": 12, "head_hidden": 12},)"
        << R"( "train": {"max_epochs": 2, "min_epochs": 1, "patience": 1, "batch_size": 16}})";
  }
  ~Workspace() { fs::remove_all(dir); }
  std::string path(const std::string& rel) const { return (dir / rel).string(); }
};

const std::string kBin = HTGNN_CLI_PATH;

}  // namespace

TEST_CASE("command-line workflow produces deterministic artifacts") {
  Workspace ws;
  const std::string gen = kBin + " generate --dataset bearing-like --config " +
                          ws.path("gen.json") + " --seed 7 --out ";
  REQUIRE(run(gen + ws.path("ds")) == 0);
  REQUIRE(run(gen + ws.path("ds2")) == 0);
  REQUIRE(slurp(ws.dir / "ds" / "manifest.json") ==
          slurp(ws.dir / "ds2" / "manifest.json"));
  REQUIRE(slurp(ws.dir / "ds" / "cond_0000.csv") ==
          slurp(ws.dir / "ds2" / "cond_0000.csv"));

  const std::string train = kBin + " train --data " + ws.path("ds") +
                            " --variant HTGNN --config " + ws.path("run.json");
  REQUIRE(run(train + " --seed 1 --out " + ws.path("run1")) == 0);
  for (const char* a : {"checkpoint.json", "checkpoint.bin", "history.csv",
                        "metrics.json"})
    REQUIRE(fs::exists(ws.dir / "run1" / a));

  // seed-identical rerun is byte-identical
  REQUIRE(run(train + " --seed 1 --out " + ws.path("run1b")) == 0);
  for (const char* a : {"checkpoint.bin", "history.csv", "metrics.json"})
    REQUIRE(slurp(ws.dir / "run1" / a) == slurp(ws.dir / "run1b" / a));

  // seed lists fan out into sibling run directories
  REQUIRE(run(train + " --seed 1,2 --out " + ws.path("multi")) == 0);
  REQUIRE(fs::exists(ws.dir / "multi" / "seed_1" / "checkpoint.json"));
  REQUIRE(fs::exists(ws.dir / "multi" / "seed_2" / "checkpoint.json"));

  REQUIRE(run(kBin + " evaluate --checkpoint " +
              ws.path("run1/checkpoint.json") + " --data " + ws.path("ds") +
              " --by speed --out " + ws.path("metrics.json") + " --pred " +
              ws.path("preds.csv")) == 0);
  const json report = json::parse(slurp(ws.dir / "metrics.json"));
  REQUIRE(report.at("categories").size() == 2);  // speeds 20 and 40
  REQUIRE(report.at("categories").contains("20"));
  REQUIRE(report.at("categories").contains("40"));

  REQUIRE(run(kBin + " plot --report " + ws.path("preds.csv") +
              " --kind timeline --out " + ws.path("tl.svg")) == 0);
  REQUIRE(run(kBin + " plot --report " + ws.path("ds") +
              " --kind spectrum --out " + ws.path("sp.svg")) == 0);
  REQUIRE(slurp(ws.dir / "tl.svg").rfind("<svg", 0) == 0);
}

TEST_CASE("ablation sweep writes one row per variant and seed") {
  Workspace ws;
  REQUIRE(run(kBin + " generate --dataset bearing-like --config " +
              ws.path("gen.json") + " --seed 3 --out " + ws.path("ds")) == 0);
  REQUIRE(run(kBin + " ablate --data " + ws.path("ds") + " --seeds 1,2 --out " +
              ws.path("abl") + " --config " + ws.path("run.json")) == 0);
  const json report = json::parse(slurp(ws.dir / "abl" / "report.json"));
  REQUIRE(report.at("rows").size() == 14);  // 7 variants x 2 seeds
  REQUIRE(report.at("failures").get<int>() == 0);
  REQUIRE(report.at("summary").contains("HTGNN"));
  REQUIRE(report.at("summary").contains("HTGNN_wo_EXO"));
  REQUIRE(run(kBin + " plot --report " + ws.path("abl/report.json") +
              " --kind bars --out " + ws.path("bars.svg")) == 0);

  // a single seed is not a sweep
  REQUIRE(run(kBin + " ablate --data " + ws.path("ds") + " --seeds 1 --out " +
              ws.path("abl1")) == 2);
}

TEST_CASE("exit codes follow the documented contract") {
  Workspace ws;
  REQUIRE(run(kBin + " generate --dataset bearing-like") == 2);  // missing --out
  REQUIRE(run(kBin + " generate --dataset nope --out " + ws.path("x")) == 2);
  std::ofstream(ws.dir / "typo.json") << R"({"typo": 1})";
  REQUIRE(run(kBin + " generate --dataset bearing-like --config " +
              ws.path("typo.json") + " --out " + ws.path("x")) == 2);
  REQUIRE(run(kBin + " generate --dataset bearing-like --config " +
              ws.path("gen.json") + " --seed 3 --out " + ws.path("ds")) == 0);
  REQUIRE(run(kBin + " train --data " + ws.path("ds") +
              " --variant NotAModel --out " + ws.path("r")) == 2);
  REQUIRE(run(kBin + " plot --report " + ws.path("ds") + " --kind nope --out " +
              ws.path("p.svg")) == 2);
  REQUIRE(run(kBin + " --help") == 0);

  // a divergent learning rate reports the training-divergence code
  std::ofstream(ws.dir / "diverge.json")
      << R"({"train": {"lr0": 1e80, "lr_min": 1e80, "warmup_iters": 0,)"
      << R"( "max_epochs": 3, "min_epochs": 1, "patience": 2}})";
  REQUIRE(run(kBin + " train --data " + ws.path("ds") +
              " --variant BiLSTM --seed 1 --out " + ws.path("dv") +
              " --config " + ws.path("diverge.json")) == 3);
}
