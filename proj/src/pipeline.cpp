#include "ovd/pipeline.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>

#include "ovd/rng.hpp"

namespace ovd {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Artifacts build_artifacts(const RunConfig& config) {
  Artifacts a;
  a.space = CategorySpace::make(config.num_base, config.num_novel);
  a.teacher = build_teacher_space(a.space, config.dimension,
                                  config.min_separation_deg * kPi / 180.0, config.seed,
                                  config.alignment_noise, config.instance_noise,
                                  config.anchor_dim);
  a.bank = build_text_bank(a.teacher, a.space, config.template_count, config.template_noise,
                           derive_seed(config.seed, {0xbaULL}));

  SceneGenConfig train_cfg = config.scene;
  train_cfg.annotate_groups = {CategoryGroup::base};
  SceneGenConfig eval_cfg = config.scene;
  eval_cfg.annotate_groups = {CategoryGroup::base, CategoryGroup::novel};
  std::tie(a.train_split, a.eval_split) =
      generate_dataset_sized(config.train_scenes, config.eval_scenes, a.teacher, a.space,
                             train_cfg, eval_cfg, config.seed, config.exec);
  a.cache = TeacherFeatureCache(a.train_split);
  return a;
}

TrainResult train_model(const RunConfig& config, const Artifacts& artifacts,
                        const EpochCallback& on_epoch) {
  return train(artifacts.train_split, artifacts.cache, artifacts.bank, artifacts.space,
               config.detector, config.train, on_epoch);
}

InferOptions infer_options(const RunConfig& config) {
  InferOptions o;
  o.filter = config.filter;
  o.postprocess = config.postprocess;
  o.score_floor = config.score_floor;
  o.guidance = config.train.guidance;
  o.tau_cls = config.train.tau_cls;
  o.seed = config.seed;
  return o;
}

EvalResult eval_model(const RunConfig& config, const Artifacts& artifacts,
                      const DetectorState& state, const InferOptions& options,
                      std::vector<Detection>* detections_out) {
  std::vector<Detection> detections =
      infer_dataset(state, artifacts.eval_split, artifacts.bank, artifacts.space, options,
                    config.exec);
  EvalResult result =
      evaluate(detections, artifacts.eval_split, default_iou_thresholds(), artifacts.space);
  if (detections_out) *detections_out = std::move(detections);
  return result;
}

std::vector<HarnessRow> ablation_harness(const RunConfig& base,
                                         const std::vector<VariantSpec>& variants) {
  // datasets keyed by teacher noise, trained models by the training fingerprint
  std::map<double, Artifacts> artifact_cache;
  std::map<std::string, DetectorState> model_cache;

  std::vector<HarnessRow> rows;
  for (const auto& v : variants) {
    RunConfig cfg = base;
    cfg.train.guidance = v.guidance;
    cfg.train.distill = v.distill;
    cfg.postprocess = v.postprocess;
    if (v.alignment_noise) cfg.alignment_noise = *v.alignment_noise;
    // L and rho are inference-time knobs: the trained model is shared
    if (v.max_priors) cfg.filter.max_priors = *v.max_priors;
    if (v.rho) cfg.filter.rho = *v.rho;
    if (v.filter_method) cfg.filter.method = *v.filter_method;
    cfg.finalize_and_validate();

    auto art_it = artifact_cache.find(cfg.alignment_noise);
    if (art_it == artifact_cache.end())
      art_it = artifact_cache.emplace(cfg.alignment_noise, build_artifacts(cfg)).first;
    const Artifacts& artifacts = art_it->second;

    const std::string train_key =
        fmt::format("{:.17g}|{}|{}|{}|{}", cfg.alignment_noise, cfg.train.guidance,
                    to_string(cfg.train.distill), cfg.train.max_priors, cfg.seed);
    auto model_it = model_cache.find(train_key);
    if (model_it == model_cache.end()) {
      TrainResult trained = train_model(cfg, artifacts);
      model_it = model_cache.emplace(train_key, std::move(trained.state)).first;
    }

    HarnessRow row;
    row.variant = v.name;
    row.result = eval_model(cfg, artifacts, model_it->second, infer_options(cfg));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<VariantSpec> suite_variants(const RunConfig& base, const std::string& suite) {
  std::vector<VariantSpec> out;
  if (suite == "components") {
    out.push_back({.name = "baseline",
                   .guidance = false,
                   .distill = DistillMode::none,
                   .postprocess = Postprocess::combined});
    out.push_back({.name = "guidance",
                   .guidance = true,
                   .distill = DistillMode::none,
                   .postprocess = Postprocess::combined});
    out.push_back({.name = "guidance_contrastive_combined",
                   .guidance = true,
                   .distill = DistillMode::contrastive,
                   .postprocess = Postprocess::combined});
    out.push_back({.name = "full",
                   .guidance = true,
                   .distill = DistillMode::contrastive,
                   .postprocess = Postprocess::similarity_only});
  } else if (suite == "teacher_scaling") {
    for (double noise : {0.4, 0.2, 0.05}) {
      VariantSpec v;
      v.name = fmt::format("noise_{:g}", noise);
      v.alignment_noise = noise;
      out.push_back(std::move(v));
    }
  } else if (suite == "priors_grid") {
    for (int l : {base.filter.max_priors, 2 * base.filter.max_priors}) {
      for (double rho : {0.7, 0.9}) {
        VariantSpec v;
        v.name = fmt::format("L{}_rho{:g}", l, rho);
        v.max_priors = l;
        v.rho = rho;
        out.push_back(std::move(v));
      }
    }
  } else if (suite == "distill_baseline") {
    for (DistillMode mode : {DistillMode::contrastive, DistillMode::l1, DistillMode::none}) {
      VariantSpec v;
      v.name = fmt::format("distill_{}", to_string(mode));
      v.distill = mode;
      out.push_back(std::move(v));
    }
  } else {
    throw std::invalid_argument("unknown ablation suite '" + suite + "'");
  }
  return out;
}

void save_harness_csv(const std::string& path, const std::vector<HarnessRow>& rows) {
  std::vector<std::pair<std::string, EvalResult>> pairs;
  for (const auto& r : rows) pairs.emplace_back(r.variant, r.result);
  save_eval_csv(path, pairs);
}

}  // namespace ovd
