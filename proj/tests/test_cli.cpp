#include "cli_commands.hpp"

#include "neat/config.hpp"
#include "neat/eval.hpp"

#include "support.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace neat;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome neat_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small, fast configuration: 3 categories, 16 channels, 8 epochs.
fs::path tiny_config(const fs::path& dir, const std::string& extra = "") {
  const fs::path path = dir / "tiny.json";
  std::ofstream(path) << R"({
  "num_categories": 3, "instances_per_category": 30, "frames": 8, "dim": 16,
  "planted_channels_per_category": 4, "test_instances_per_category": 20,
  "ratio": 0.3, "epochs": 8, "warmup_epochs": 3, "batch_size": 16,
  "hidden_dim": 32, "embed_dim": 16, "proj_dim": 16, "b": 4, "neighbors": 4,
  "max_grad_norm": 2.0, "seed": 9)"
                      << extra << "\n}\n";
  return path;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("argument errors exit with the config code") {
    CHECK(neat_cli({}).code == cli::kExitConfig);
    CHECK(neat_cli({"bogus"}).code == cli::kExitConfig);
    CHECK(neat_cli({"gen"}).code == cli::kExitConfig);
    CHECK(neat_cli({"gen", "--out", "x.bin", "--seed", "abc"}).code == cli::kExitConfig);
    CHECK(neat_cli({"train", "--config", "/nonexistent/config.json"}).code == cli::kExitConfig);
  }

  TEST_CASE("help exits cleanly") {
    const auto o = neat_cli({"--help"});
    CHECK(o.code == cli::kExitOk);
    CHECK(o.out.find("gen") != std::string::npos);
  }

  TEST_CASE("invalid config values exit with the config code") {
    const auto dir = neat::testing::scratch_dir("cli_badcfg");
    std::ofstream(dir / "unknown.json") << R"({"epochs": 5, "no_such_key": 1})";
    std::ofstream(dir / "range.json") << R"({"ratio": 1.5})";
    std::ofstream(dir / "syntax.json") << "{ not json";
    for (const char* name : {"unknown.json", "range.json"}) {
      const auto o = neat_cli({"gen", "--config", (dir / name).string(), "--out", (dir / "d.bin").string()});
      CHECK(o.code == cli::kExitConfig);
      CHECK(o.err.find("config error") != std::string::npos);
    }
    const auto syntax =
        neat_cli({"gen", "--config", (dir / "syntax.json").string(), "--out", (dir / "d.bin").string()});
    CHECK(syntax.code == cli::kExitConfig);
  }

  TEST_CASE("unreadable inputs exit with the io code") {
    const auto dir = neat::testing::scratch_dir("cli_io");
    std::ofstream(dir / "garbage.bin") << "not a dataset";
    const auto cfg = tiny_config(dir);
    const auto o = neat_cli({"train", "--config", cfg.string(), "--data", (dir / "garbage.bin").string(), "--out",
                             (dir / "run").string()});
    CHECK(o.code == cli::kExitIo);
    fs::create_directories(dir / "empty_run");
    CHECK(neat_cli({"eval", (dir / "empty_run").string()}).code == cli::kExitIo);
  }

  TEST_CASE("gen, train, detect and eval end to end") {
    const auto dir = neat::testing::scratch_dir("cli_e2e");
    const auto cfg = tiny_config(dir);
    const auto data = dir / "train.bin";
    REQUIRE(neat_cli({"gen", "--config", cfg.string(), "--out", data.string()}).code == cli::kExitOk);
    CHECK(fs::exists(data));
    const auto sidecar = nlohmann::json::parse(slurp(data.string() + ".json"));
    CHECK(sidecar["noise"]["total_noisy"] == 27);
    CHECK(sidecar["noise"]["instances"] == 90);

    const auto run = dir / "run";
    const auto trained = neat_cli({"train", "--config", cfg.string(), "--data", data.string(), "--out", run.string()});
    REQUIRE(trained.code == cli::kExitOk);
    for (const char* file : {"config.json", "metrics.csv", "checkpoint.bin", "checkpoint.bin.json", "split.csv"}) {
      CHECK(fs::exists(run / file));
    }
    const auto history = eval::read_metrics(run / "metrics.csv");
    CHECK(history.size() == 8);
    for (const auto& m : history) {
      CHECK(m.wall_time_seconds == 0.0);
      CHECK(m.test_accuracy >= 0.0);
      CHECK(m.test_accuracy <= 1.0);
    }

    const auto split = dir / "split.csv";
    const auto detected = neat_cli({"detect", "--config", cfg.string(), "--data", data.string(), "--checkpoint",
                                    (run / "checkpoint.bin").string(), "--out", split.string()});
    REQUIRE(detected.code == cli::kExitOk);
    CHECK(detected.out.find("f1=") != std::string::npos);
    std::ifstream in(split);
    std::string line;
    int rows = -1;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 90);

    const auto all = neat_cli({"detect", "--config", cfg.string(), "--data", data.string(), "--checkpoint",
                               (run / "checkpoint.bin").string(), "--out", (dir / "all.csv").string(), "--b", "16"});
    CHECK(all.code == cli::kExitOk);

    const auto summary = neat_cli({"eval", run.string()});
    REQUIRE(summary.code == cli::kExitOk);
    const auto doc = nlohmann::json::parse(slurp(run / "summary.json"));
    CHECK(doc["epochs"] == 8);
    const auto s = eval::summarize(history);
    CHECK(doc["best_test_accuracy"].get<double>() == s.best_test_accuracy);
    CHECK(doc["best_test_epoch"].get<int>() == s.best_test_epoch);
  }

  TEST_CASE("oracle detection from the command line") {
    const auto dir = neat::testing::scratch_dir("cli_oracle");
    const auto cfg = tiny_config(dir, R"(, "ct_mode": "ct_oracle", "noise_sigma": 0.05, "distractor_strength": 0.05)");
    const auto data = dir / "train.bin";
    REQUIRE(neat_cli({"gen", "--config", cfg.string(), "--out", data.string()}).code == cli::kExitOk);
    REQUIRE(neat_cli({"train", "--config", cfg.string(), "--data", data.string(), "--out", (dir / "run").string()})
                .code == cli::kExitOk);
    const auto history = eval::read_metrics(dir / "run" / "metrics.csv");
    double best = 0.0;
    for (const auto& m : history) best = std::max(best, m.detection_f1);
    CHECK(best >= 0.95);
  }

  TEST_CASE("seed override changes the data and is recorded") {
    const auto dir = neat::testing::scratch_dir("cli_seed");
    const auto cfg = tiny_config(dir);
    REQUIRE(neat_cli({"gen", "--config", cfg.string(), "--out", (dir / "a.bin").string()}).code == cli::kExitOk);
    REQUIRE(neat_cli({"gen", "--config", cfg.string(), "--out", (dir / "b.bin").string(), "--seed", "77"}).code ==
            cli::kExitOk);
    REQUIRE(neat_cli({"gen", "--config", cfg.string(), "--out", (dir / "c.bin").string()}).code == cli::kExitOk);
    CHECK(slurp(dir / "a.bin") == slurp(dir / "c.bin"));
    CHECK(slurp(dir / "a.bin") != slurp(dir / "b.bin"));
    const auto sidecar = nlohmann::json::parse(slurp(dir / "b.bin.json"));
    CHECK(sidecar["config"]["seed"] == 77);
  }

  TEST_CASE("dataset dimensions must match the config") {
    const auto dir = neat::testing::scratch_dir("cli_dims");
    const auto cfg = tiny_config(dir);
    REQUIRE(neat_cli({"gen", "--config", cfg.string(), "--out", (dir / "a.bin").string()}).code == cli::kExitOk);
    std::ofstream(dir / "wide.json") << R"({"num_categories": 3, "dim": 32, "planted_channels_per_category": 4})";
    const auto o = neat_cli({"train", "--config", (dir / "wide.json").string(), "--data", (dir / "a.bin").string(),
                             "--out", (dir / "run").string()});
    CHECK(o.code == cli::kExitConfig);
  }

  TEST_CASE("the executable forwards exit codes") {
    const std::string cli = NEAT_CLI_PATH;
    CHECK(WEXITSTATUS(std::system((cli + " bogus >/dev/null 2>&1").c_str())) == cli::kExitConfig);
    CHECK(WEXITSTATUS(std::system((cli + " --help >/dev/null 2>&1").c_str())) == cli::kExitOk);
  }
}
