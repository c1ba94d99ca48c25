#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ovd/config.hpp"
#include "ovd/evaluator.hpp"
#include "ovd/trainer.hpp"

namespace ovd {

// Everything cmd_gen produces and the rest of the pipeline consumes.
struct Artifacts {
  CategorySpace space;
  TeacherSpace teacher;
  TextEmbeddingBank bank;
  Dataset train_split;
  Dataset eval_split;
  TeacherFeatureCache cache;
};

Artifacts build_artifacts(const RunConfig& config);

TrainResult train_model(const RunConfig& config, const Artifacts& artifacts,
                        const EpochCallback& on_epoch = {});

InferOptions infer_options(const RunConfig& config);

EvalResult eval_model(const RunConfig& config, const Artifacts& artifacts,
                      const DetectorState& state, const InferOptions& options,
                      std::vector<Detection>* detections_out = nullptr);

// One row of an ablation sweep. Unset optionals inherit from the base config.
struct VariantSpec {
  std::string name;
  bool guidance = true;
  DistillMode distill = DistillMode::contrastive;
  Postprocess postprocess = Postprocess::similarity_only;
  std::optional<double> alignment_noise;  // regenerates teacher + data when set
  std::optional<int> max_priors;
  std::optional<double> rho;
  std::optional<FilterMethod> filter_method;
};

struct HarnessRow {
  std::string variant;
  EvalResult result;
};

// Trains one model per variant under identical seeds (models and datasets are
// reused across variants whose training-relevant settings coincide) and
// evaluates each with its inference settings.
std::vector<HarnessRow> ablation_harness(const RunConfig& base,
                                         const std::vector<VariantSpec>& variants);

// Named sweeps: components, teacher_scaling, priors_grid, distill_baseline.
// Throws std::invalid_argument on an unknown suite name.
std::vector<VariantSpec> suite_variants(const RunConfig& base, const std::string& suite);

void save_harness_csv(const std::string& path, const std::vector<HarnessRow>& rows);

}  // namespace ovd
