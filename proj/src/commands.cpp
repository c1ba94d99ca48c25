#include "ovd/commands.hpp"

#include <cstdlib>
#include <filesystem>
#include <fmt/format.h>
#include <fstream>
#include <iostream>

#include "ovd/gradcheck.hpp"
#include "ovd/pipeline.hpp"

namespace fs = std::filesystem;

namespace ovd::cli {

namespace {

// Environment beats flags, flags beat the config file.
std::optional<std::uint64_t> env_seed() {
  if (const char* s = std::getenv("OVD_SEED")) return std::strtoull(s, nullptr, 10);
  return {};
}

std::string resolve_out_dir(const std::string& out_dir) {
  if (const char* s = std::getenv("OVD_OUT")) return s;
  return out_dir;
}

void apply_seed(RunConfig& cfg, std::optional<std::uint64_t> flag_seed) {
  if (flag_seed) cfg.seed = *flag_seed;
  if (const auto s = env_seed()) cfg.seed = *s;
  cfg.finalize_and_validate();
}

void write_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << run_config_to_json(cfg).dump(2) << "\n";
}

int fail(int code, const std::string& message) {
  std::cerr << "error: " << message << "\n";
  return code;
}

}  // namespace

int cmd_gen(const std::string& config_path, const std::string& out_dir,
            std::optional<std::uint64_t> seed) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
    apply_seed(cfg, seed);
  } catch (const std::exception& e) {
    return fail(kExitConfig, e.what());
  }

  try {
    const Artifacts artifacts = build_artifacts(cfg);
    const std::string out = resolve_out_dir(out_dir);
    fs::create_directories(out);
    save_dataset(out + "/train.json", artifacts.train_split);
    save_dataset(out + "/eval.json", artifacts.eval_split);
    export_embedding_bank(out + "/bank.json", artifacts.bank, artifacts.space);
    artifacts.cache.save(out + "/cache.json");
    write_config(out + "/config.json", cfg);
    std::cout << fmt::format("generated {} train / {} eval scenes into {}\n",
                             artifacts.train_split.scenes.size(),
                             artifacts.eval_split.scenes.size(), out);
  } catch (const std::invalid_argument& e) {
    return fail(kExitConfig, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, std::optional<std::uint64_t> seed) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path);
    apply_seed(cfg, seed);
  } catch (const std::exception& e) {
    return fail(kExitConfig, e.what());
  }

  for (const char* name : {"/train.json", "/bank.json", "/cache.json"}) {
    if (!fs::exists(data_dir + std::string(name)))
      return fail(kExitMissingData, "missing data file " + data_dir + name + " (run gen first)");
  }

  try {
    Artifacts artifacts;
    artifacts.space = CategorySpace::make(cfg.num_base, cfg.num_novel);
    artifacts.train_split = load_dataset(data_dir + "/train.json");
    artifacts.bank = import_embedding_bank(data_dir + "/bank.json", artifacts.space);
    artifacts.cache = TeacherFeatureCache::load(data_dir + "/cache.json");
    if (artifacts.bank.dimension != cfg.dimension ||
        artifacts.train_split.dimension != cfg.dimension)
      return fail(kExitMismatch,
                  fmt::format("data dimension {} does not match config dimension {}",
                              artifacts.train_split.dimension, cfg.dimension));

    const TrainResult result = train_model(cfg, artifacts, [&](int epoch, double loss) {
      std::cout << fmt::format("epoch {}/{} mean_loss={:.6f}\n", epoch + 1,
                               cfg.train.total_epochs, loss);
    });

    const std::string out = resolve_out_dir(out_dir);
    fs::create_directories(out);
    save_checkpoint(out + "/checkpoint.bin", result.state);
    save_train_log(out + "/trainlog.csv", result.log);
  } catch (const std::invalid_argument& e) {
    return fail(kExitConfig, e.what());
  } catch (const std::runtime_error& e) {
    return fail(kExitNumeric, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& out_dir, const EvalFlags& flags) {
  if (!fs::exists(checkpoint_path))
    return fail(kExitMissingData, "missing checkpoint " + checkpoint_path);
  for (const char* name : {"/eval.json", "/bank.json"}) {
    if (!fs::exists(data_dir + std::string(name)))
      return fail(kExitMissingData, "missing data file " + data_dir + name + " (run gen first)");
  }

  RunConfig cfg;
  try {
    if (!flags.config_path.empty()) {
      cfg = load_run_config(flags.config_path);
    } else if (fs::exists(data_dir + "/config.json")) {
      cfg = load_run_config(data_dir + "/config.json");
    }
    if (flags.filter) {
      if (*flags.filter == "similarity") cfg.filter.method = FilterMethod::similarity_threshold;
      else if (*flags.filter == "oracle") cfg.filter.method = FilterMethod::binary_oracle;
      else return fail(kExitConfig, "unknown --filter value '" + *flags.filter + "'");
    }
    if (flags.rho) cfg.filter.rho = *flags.rho;
    if (flags.priors) cfg.filter.max_priors = *flags.priors;
    apply_seed(cfg, flags.seed);
  } catch (const std::exception& e) {
    return fail(kExitConfig, e.what());
  }

  try {
    const DetectorState state = load_checkpoint(checkpoint_path);
    const CategorySpace space = CategorySpace::make(cfg.num_base, cfg.num_novel);
    const TextEmbeddingBank bank = import_embedding_bank(data_dir + "/bank.json", space);
    const Dataset eval_split = load_dataset(data_dir + "/eval.json");
    if (bank.dimension != state.dims.embed_dim || eval_split.dimension != state.dims.embed_dim)
      return fail(kExitMismatch,
                  fmt::format("checkpoint D={} does not match data D={}", state.dims.embed_dim,
                              eval_split.dimension));
    if (cfg.filter.max_priors > state.dims.num_queries)
      return fail(kExitMismatch,
                  fmt::format("max_priors {} exceeds checkpoint query count {}",
                              cfg.filter.max_priors, state.dims.num_queries));

    std::vector<Postprocess> modes;
    if (flags.postprocess.empty()) {
      modes.push_back(cfg.postprocess);
    } else {
      for (const auto& s : flags.postprocess) {
        if (s == "similarity_only") modes.push_back(Postprocess::similarity_only);
        else if (s == "combined") modes.push_back(Postprocess::combined);
        else return fail(kExitConfig, "unknown --postprocess value '" + s + "'");
      }
    }

    const std::string out = resolve_out_dir(out_dir);
    fs::create_directories(out);
    std::vector<std::pair<std::string, EvalResult>> rows;
    for (Postprocess mode : modes) {
      InferOptions options = infer_options(cfg);
      options.postprocess = mode;
      const std::vector<Detection> detections =
          infer_dataset(state, eval_split, bank, space, options, cfg.exec);
      const EvalResult result =
          evaluate(detections, eval_split, default_iou_thresholds(), space);
      save_detections(fmt::format("{}/detections_{}.json", out, to_string(mode)), detections);
      save_per_category_csv(fmt::format("{}/per_category_ap_{}.csv", out, to_string(mode)),
                            result);
      rows.emplace_back(to_string(mode), result);
      std::cout << fmt::format("{}: ap50_novel={:.4f} ap50_base={:.4f} ap50_all={:.4f}\n",
                               to_string(mode), result.ap50_novel, result.ap50_base,
                               result.ap50_all);
    }
    save_eval_csv(out + "/metrics.csv", rows);
  } catch (const std::invalid_argument& e) {
    return fail(kExitConfig, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::string& suite,
               const std::string& out_dir, std::optional<std::uint64_t> seed) {
  RunConfig cfg;
  std::vector<VariantSpec> variants;
  try {
    cfg = load_run_config(config_path);
    apply_seed(cfg, seed);
    variants = suite_variants(cfg, suite);
  } catch (const std::exception& e) {
    return fail(kExitConfig, e.what());
  }

  try {
    const std::vector<HarnessRow> rows = ablation_harness(cfg, variants);
    const std::string out = resolve_out_dir(out_dir);
    fs::create_directories(out);
    save_harness_csv(out + "/" + suite + ".csv", rows);
    for (const auto& r : rows)
      std::cout << fmt::format("{}: ap50_novel={:.4f} ap50_base={:.4f}\n", r.variant,
                               r.result.ap50_novel, r.result.ap50_base);
  } catch (const std::runtime_error& e) {
    return fail(kExitNumeric, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return kExitOk;
}

int cmd_gradcheck(int trials, double tolerance) {
  std::vector<GradCheckRow> rows;
  try {
    rows = run_gradcheck(trials);
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  bool ok = true;
  std::cout << "component,worst_relative_error,tolerance,status\n";
  for (const auto& r : rows) {
    const bool pass = r.worst_error <= tolerance;
    ok = ok && pass;
    std::cout << fmt::format("{},{:.3e},{:.3e},{}\n", r.component, r.worst_error, tolerance,
                             pass ? "pass" : "FAIL");
  }
  return ok ? kExitOk : kExitGradcheck;
}

}  // namespace ovd::cli
