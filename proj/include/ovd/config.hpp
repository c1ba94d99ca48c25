#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ovd/concept_filter.hpp"
#include "ovd/detector.hpp"
#include "ovd/evaluator.hpp"
#include "ovd/scene.hpp"
#include "ovd/trainer.hpp"

namespace ovd {

// One document configuring the whole pipeline. Defaults are the frozen
// synthetic benchmark; a config file overrides fields selectively but unknown
// keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  int dimension = 64;
  int num_base = 10;
  int num_novel = 4;

  // teacher space
  double min_separation_deg = 45.0;
  int anchor_dim = 16;  // anchors live in a shared subspace of this dimension
  double alignment_noise = 0.05;
  double instance_noise = 0.05;
  int template_count = 12;
  double template_noise = 0.05;

  // scenes (annotate_groups is fixed per split at generation time)
  SceneGenConfig scene;
  int train_scenes = 400;
  int eval_scenes = 100;

  FilterConfig filter;
  DetectorDims detector;
  TrainConfig train;

  double score_floor = 0.05;
  Postprocess postprocess = Postprocess::similarity_only;
  ExecMode exec = ExecMode::openmp;

  // Re-derives the tied fields (detector dimension, trainer seed/L/exec) and
  // checks all invariants. Throws std::invalid_argument on violations.
  void finalize_and_validate();
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& config);

const char* to_string(Postprocess p);
const char* to_string(FilterMethod m);
const char* to_string(DistillMode m);

}  // namespace ovd
