#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ovd/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"ovdet -- open-vocabulary detection with teacher-space distillation"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_dir = "out", checkpoint_path, suite;
  std::optional<std::uint64_t> seed;
  ovd::cli::EvalFlags eval_flags;
  int trials = 20;
  double tolerance = 1e-4;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Override the config seed (env OVD_SEED wins)");
  };

  auto* gen = app.add_subcommand("gen", "Generate dataset, embedding bank and teacher cache");
  gen->add_option("--config", config_path, "Run configuration JSON")->required();
  gen->add_option("--out", out_dir, "Output directory (env OVD_OUT wins)");
  add_seed(gen);

  auto* train = app.add_subcommand("train", "Train the detector on a generated dataset");
  train->add_option("--config", config_path, "Run configuration JSON")->required();
  train->add_option("--data", data_dir, "Directory produced by gen")->required();
  train->add_option("--out", out_dir, "Output directory (env OVD_OUT wins)");
  add_seed(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the eval split");
  eval->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--data", data_dir, "Directory produced by gen")->required();
  eval->add_option("--out", out_dir, "Output directory (env OVD_OUT wins)");
  eval->add_option("--config", eval_flags.config_path,
                   "Run configuration JSON (default: <data>/config.json)");
  eval->add_option("--filter", eval_flags.filter, "Concept filter: similarity or oracle");
  eval->add_option("--rho", eval_flags.rho, "Similarity retain threshold");
  eval->add_option("--priors", eval_flags.priors, "Number of semantic priors L");
  eval->add_option("--postprocess", eval_flags.postprocess,
                   "similarity_only and/or combined (repeatable)");
  eval->add_option("--seed", eval_flags.seed, "Override the config seed (env OVD_SEED wins)");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation suite");
  ablate->add_option("--config", config_path, "Run configuration JSON")->required();
  ablate->add_option("--suite", suite,
                     "components | teacher_scaling | priors_grid | distill_baseline")
      ->required();
  ablate->add_option("--out", out_dir, "Output directory (env OVD_OUT wins)");
  add_seed(ablate);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
  gradcheck->add_option("--trials", trials, "Random instances per component");
  gradcheck->add_option("--tol", tolerance, "Maximum accepted relative error");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) return ovd::cli::cmd_gen(config_path, out_dir, seed);
  if (train->parsed()) return ovd::cli::cmd_train(config_path, data_dir, out_dir, seed);
  if (eval->parsed()) return ovd::cli::cmd_eval(checkpoint_path, data_dir, out_dir, eval_flags);
  if (ablate->parsed()) return ovd::cli::cmd_ablate(config_path, suite, out_dir, seed);
  if (gradcheck->parsed()) return ovd::cli::cmd_gradcheck(trials, tolerance);
  return 1;
}
