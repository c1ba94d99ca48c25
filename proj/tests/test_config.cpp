#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ovd/commands.hpp"
#include "ovd/config.hpp"
#include "ovd/detector.hpp"

using namespace ovd;
namespace fs = std::filesystem;

namespace {

// small config so command round trips stay fast
nlohmann::json tiny_config_json() {
  nlohmann::json j;
  j["seed"] = 3;
  j["dimension"] = 16;
  j["categories"] = {{"base", 4}, {"novel", 2}};
  j["teacher"] = {{"anchor_dim", 8}};
  j["scene"] = {{"grid", 6}, {"objects_max", 3}};
  j["data"] = {{"train_scenes", 8}, {"eval_scenes", 4}};
  j["filter"] = {{"max_priors", 3}};
  j["detector"] = {{"queries", 8}, {"query_dim", 8}, {"hidden_dim", 16}};
  j["train"] = {{"total_epochs", 2}, {"phase1_epochs", 1}, {"decay_epoch", 2}, {"batch_size", 4}};
  return j;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

std::string write_json(const fs::path& dir, const std::string& name, const nlohmann::json& j) {
  const std::string path = (dir / name).string();
  std::ofstream out(path);
  out << j.dump(2);
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct EnvGuard {
  EnvGuard() {
    unsetenv("OVD_SEED");
    unsetenv("OVD_OUT");
  }
};

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("defaults validate and round trip through JSON") {
    RunConfig defaults;
    defaults.finalize_and_validate();
    const RunConfig reloaded = run_config_from_json(run_config_to_json(defaults));
    CHECK(reloaded.seed == defaults.seed);
    CHECK(reloaded.dimension == defaults.dimension);
    CHECK(reloaded.filter.rho == defaults.filter.rho);
    CHECK(reloaded.train.base_lr == defaults.train.base_lr);
    CHECK(reloaded.train.weights.lambda_l1 == defaults.train.weights.lambda_l1);
    CHECK(reloaded.scene.grid == defaults.scene.grid);
  }

  TEST_CASE("a partial config file overrides selectively") {
    const RunConfig c = run_config_from_json(tiny_config_json());
    CHECK(c.dimension == 16);
    CHECK(c.num_base == 4);
    CHECK(c.detector.num_queries == 8);
    CHECK(c.detector.embed_dim == 16);      // tied to dimension
    CHECK(c.train.seed == 3);               // tied to seed
    CHECK(c.train.max_priors == 3);         // tied to the filter L
    CHECK(c.train.base_lr == 1e-4);         // untouched default
  }

  TEST_CASE("unknown keys are rejected at every level") {
    nlohmann::json j = tiny_config_json();
    j["surprise"] = 1;
    CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);

    nlohmann::json nested = tiny_config_json();
    nested["train"]["momentum"] = 0.9;
    CHECK_THROWS_AS(run_config_from_json(nested), std::invalid_argument);
  }

  TEST_CASE("invariant violations are rejected") {
    nlohmann::json j = tiny_config_json();
    j["filter"]["rho"] = 1.5;
    CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);

    j = tiny_config_json();
    j["filter"]["max_priors"] = 20;  // above query count and category count
    CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);

    j = tiny_config_json();
    j["train"]["phase1_epochs"] = 99;
    CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);

    j = tiny_config_json();
    j["scene"]["grid"] = 1;
    CHECK_THROWS_AS(run_config_from_json(j), std::invalid_argument);
  }
}

TEST_SUITE("commands") {
  TEST_CASE("gen writes all artifacts and is idempotent; bad configs write nothing") {
    EnvGuard guard;
    TempDir dir("ovd_cmd_gen");
    const std::string cfg = write_json(dir.path, "config.json", tiny_config_json());
    const std::string out = (dir.path / "data").string();

    REQUIRE(cli::cmd_gen(cfg, out) == cli::kExitOk);
    for (const char* f : {"train.json", "eval.json", "bank.json", "cache.json", "config.json"})
      CHECK(fs::exists(fs::path(out) / f));

    const std::string first = slurp(out + "/train.json");
    REQUIRE(cli::cmd_gen(cfg, out) == cli::kExitOk);
    CHECK(slurp(out + "/train.json") == first);  // byte-identical rerun

    nlohmann::json bad = tiny_config_json();
    bad["oops"] = true;
    const std::string bad_cfg = write_json(dir.path, "bad.json", bad);
    const std::string out2 = (dir.path / "data2").string();
    CHECK(cli::cmd_gen(bad_cfg, out2) == cli::kExitConfig);
    CHECK_FALSE(fs::exists(out2));  // no partial output

    const std::string missing = (dir.path / "nope.json").string();
    CHECK(cli::cmd_gen(missing, out2) == cli::kExitConfig);
  }

  TEST_CASE("train and eval command round trip with deterministic outputs") {
    EnvGuard guard;
    TempDir dir("ovd_cmd_train");
    const std::string cfg = write_json(dir.path, "config.json", tiny_config_json());
    const std::string data = (dir.path / "data").string();
    REQUIRE(cli::cmd_gen(cfg, data) == cli::kExitOk);

    const std::string run1 = (dir.path / "run1").string();
    const std::string run2 = (dir.path / "run2").string();
    REQUIRE(cli::cmd_train(cfg, data, run1) == cli::kExitOk);
    REQUIRE(cli::cmd_train(cfg, data, run2) == cli::kExitOk);
    CHECK(slurp(run1 + "/checkpoint.bin") == slurp(run2 + "/checkpoint.bin"));
    CHECK(slurp(run1 + "/trainlog.csv") == slurp(run2 + "/trainlog.csv"));

    // log has one row per optimizer step: 2 epochs x ceil(8/4) batches
    std::ifstream log(run1 + "/trainlog.csv");
    std::string line;
    int rows = -1;  // header
    while (std::getline(log, line))
      if (!line.empty()) ++rows;
    CHECK(rows == 4);

    const std::string eval1 = (dir.path / "eval1").string();
    const std::string eval2 = (dir.path / "eval2").string();
    cli::EvalFlags flags;
    flags.postprocess = {"similarity_only", "combined"};
    REQUIRE(cli::cmd_eval(run1 + "/checkpoint.bin", data, eval1, flags) == cli::kExitOk);
    REQUIRE(cli::cmd_eval(run1 + "/checkpoint.bin", data, eval2, flags) == cli::kExitOk);
    CHECK(slurp(eval1 + "/metrics.csv") == slurp(eval2 + "/metrics.csv"));

    // both requested postprocess rows are present
    const std::string metrics = slurp(eval1 + "/metrics.csv");
    CHECK(metrics.find("similarity_only,") != std::string::npos);
    CHECK(metrics.find("combined,") != std::string::npos);
  }

  TEST_CASE("missing inputs and artifact mismatches map to their exit codes") {
    EnvGuard guard;
    TempDir dir("ovd_cmd_errors");
    const std::string cfg = write_json(dir.path, "config.json", tiny_config_json());

    CHECK(cli::cmd_train(cfg, (dir.path / "absent").string(), (dir.path / "o").string()) ==
          cli::kExitMissingData);

    const std::string data = (dir.path / "data").string();
    REQUIRE(cli::cmd_gen(cfg, data) == cli::kExitOk);
    CHECK(cli::cmd_eval((dir.path / "no.bin").string(), data, (dir.path / "o").string()) ==
          cli::kExitMissingData);

    // checkpoint with a different embedding dimension
    const DetectorState wrong = init_state(DetectorDims{8, 32, 8, 16}, 1);
    const std::string wrong_path = (dir.path / "wrong.bin").string();
    save_checkpoint(wrong_path, wrong);
    CHECK(cli::cmd_eval(wrong_path, data, (dir.path / "o").string()) == cli::kExitMismatch);

    CHECK(cli::cmd_ablate(cfg, "unknown_suite", (dir.path / "o").string()) == cli::kExitConfig);
  }

  TEST_CASE("gradcheck exit codes follow the tolerance") {
    CHECK(cli::cmd_gradcheck(2, 1e-4) == cli::kExitOk);
    CHECK(cli::cmd_gradcheck(1, 0.0) == cli::kExitGradcheck);
  }
}
