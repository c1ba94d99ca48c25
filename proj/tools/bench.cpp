// Timing comparison between the serial reference and the OpenMP kernels for
// the three data-parallel stages: scene generation, batched training steps,
// and inference over the eval split. Both modes run identical per-scene code;
// the parallel path only changes who executes it.

#include <chrono>
#include <cstdio>
#include <functional>

#include <CLI11.hpp>

#include "ovd/pipeline.hpp"

using ovd::ExecMode;

namespace {

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* kernel, double serial_ms, double openmp_ms) {
  std::printf("%-18s %12.1f %12.1f %10.2fx\n", kernel, serial_ms, openmp_ms,
              serial_ms / openmp_ms);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ovdet-bench -- serial vs OpenMP kernel timings"};
  int scenes = 200;
  int epochs = 2;
  int reps = 3;
  app.add_option("--scenes", scenes, "Train scenes in the benchmark dataset");
  app.add_option("--epochs", epochs, "Training epochs to time");
  app.add_option("--reps", reps, "Repetitions per measurement (best is reported)");
  CLI11_PARSE(app, argc, argv);

  ovd::RunConfig cfg;
  cfg.train_scenes = scenes;
  cfg.eval_scenes = std::max(scenes / 4, 1);
  cfg.train.total_epochs = epochs;
  cfg.train.phase1_epochs = std::min(1, epochs);
  cfg.finalize_and_validate();

  std::printf("threads available: %d\n", ovd::hardware_threads());
  std::printf("%-18s %12s %12s %10s\n", "kernel", "serial(ms)", "openmp(ms)", "speedup");

  double serial_ms, openmp_ms;
  {
    auto gen = [&](ExecMode mode) {
      ovd::RunConfig c = cfg;
      c.exec = mode;
      return best_of(reps, [&] { ovd::build_artifacts(c); });
    };
    serial_ms = gen(ExecMode::serial);
    openmp_ms = gen(ExecMode::openmp);
    report("scene_generation", serial_ms, openmp_ms);
  }

  const ovd::Artifacts artifacts = ovd::build_artifacts(cfg);
  {
    auto run = [&](ExecMode mode) {
      ovd::RunConfig c = cfg;
      c.exec = mode;
      c.finalize_and_validate();
      return best_of(reps, [&] { ovd::train_model(c, artifacts); });
    };
    serial_ms = run(ExecMode::serial);
    openmp_ms = run(ExecMode::openmp);
    report("train_batches", serial_ms, openmp_ms);
  }

  {
    const ovd::DetectorState state = ovd::init_state(cfg.detector, cfg.seed);
    auto run = [&](ExecMode mode) {
      return best_of(reps, [&] {
        ovd::infer_dataset(state, artifacts.eval_split, artifacts.bank, artifacts.space,
                           ovd::infer_options(cfg), mode);
      });
    };
    serial_ms = run(ExecMode::serial);
    openmp_ms = run(ExecMode::openmp);
    report("inference", serial_ms, openmp_ms);
  }
  return 0;
}
