#include "ovd/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace ovd {

namespace {

void expect_keys(const nlohmann::json& j, const std::string& where,
                 const std::set<std::string>& allowed) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

Postprocess parse_postprocess(const std::string& s) {
  if (s == "similarity_only") return Postprocess::similarity_only;
  if (s == "combined") return Postprocess::combined;
  throw std::invalid_argument("config: unknown postprocess '" + s + "'");
}

FilterMethod parse_filter_method(const std::string& s) {
  if (s == "similarity" || s == "similarity_threshold") return FilterMethod::similarity_threshold;
  if (s == "oracle" || s == "binary_oracle") return FilterMethod::binary_oracle;
  throw std::invalid_argument("config: unknown filter method '" + s + "'");
}

DistillMode parse_distill(const std::string& s) {
  if (s == "contrastive") return DistillMode::contrastive;
  if (s == "l1") return DistillMode::l1;
  if (s == "none") return DistillMode::none;
  throw std::invalid_argument("config: unknown distill mode '" + s + "'");
}

ExecMode parse_exec(const std::string& s) {
  if (s == "openmp") return ExecMode::openmp;
  if (s == "serial") return ExecMode::serial;
  throw std::invalid_argument("config: unknown exec mode '" + s + "'");
}

}  // namespace

const char* to_string(Postprocess p) {
  return p == Postprocess::similarity_only ? "similarity_only" : "combined";
}
const char* to_string(FilterMethod m) {
  return m == FilterMethod::similarity_threshold ? "similarity" : "oracle";
}
const char* to_string(DistillMode m) {
  switch (m) {
    case DistillMode::contrastive: return "contrastive";
    case DistillMode::l1: return "l1";
    default: return "none";
  }
}

void RunConfig::finalize_and_validate() {
  detector.embed_dim = dimension;
  train.seed = seed;
  train.exec = exec;

  if (dimension < 4) throw std::invalid_argument("config: dimension must be >= 4");
  if (num_base < 1 || num_novel < 0 || num_base + num_novel < 2)
    throw std::invalid_argument("config: need >= 2 categories and >= 1 base category");
  if (min_separation_deg <= 0.0 || min_separation_deg >= 180.0)
    throw std::invalid_argument("config: min_separation_deg must be in (0, 180)");
  if (anchor_dim != 0 && (anchor_dim < 2 || anchor_dim > dimension))
    throw std::invalid_argument("config: anchor_dim must be 0 or in [2, dimension]");
  if (alignment_noise < 0.0 || instance_noise < 0.0 || template_noise < 0.0)
    throw std::invalid_argument("config: noise scales must be >= 0");
  if (template_count < 1) throw std::invalid_argument("config: template_count must be >= 1");
  if (train_scenes < 1 || eval_scenes < 1)
    throw std::invalid_argument("config: scene counts must be >= 1");
  if (score_floor < 0.0 || score_floor > 1.0)
    throw std::invalid_argument("config: score_floor must be in [0, 1]");
  scene.validate();
  filter.validate(num_base + num_novel);
  train.validate();
  if (filter.max_priors > detector.num_queries || train.max_priors > detector.num_queries)
    throw std::invalid_argument("config: max_priors exceeds detector queries");
  if (train.guidance && train.max_priors > num_base)
    throw std::invalid_argument("config: training max_priors exceeds base category count");
  if (scene.max_objects > detector.num_queries)
    throw std::invalid_argument("config: objects_per_scene exceeds detector queries");
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  expect_keys(j, "top level",
              {"seed", "dimension", "categories", "teacher", "scene", "data", "filter", "detector",
               "train", "eval", "exec"});
  RunConfig c;
  read(j, "seed", c.seed);
  read(j, "dimension", c.dimension);

  if (j.contains("categories")) {
    const auto& cj = j.at("categories");
    expect_keys(cj, "categories", {"base", "novel"});
    read(cj, "base", c.num_base);
    read(cj, "novel", c.num_novel);
  }
  if (j.contains("teacher")) {
    const auto& tj = j.at("teacher");
    expect_keys(tj, "teacher",
                {"min_separation_deg", "anchor_dim", "alignment_noise", "instance_noise",
                 "template_count", "template_noise"});
    read(tj, "min_separation_deg", c.min_separation_deg);
    read(tj, "anchor_dim", c.anchor_dim);
    read(tj, "alignment_noise", c.alignment_noise);
    read(tj, "instance_noise", c.instance_noise);
    read(tj, "template_count", c.template_count);
    read(tj, "template_noise", c.template_noise);
  }
  if (j.contains("scene")) {
    const auto& sj = j.at("scene");
    expect_keys(sj, "scene",
                {"objects_min", "objects_max", "box_min", "box_max", "max_pairwise_iou",
                 "background_noise", "grid"});
    read(sj, "objects_min", c.scene.min_objects);
    read(sj, "objects_max", c.scene.max_objects);
    read(sj, "box_min", c.scene.min_box_size);
    read(sj, "box_max", c.scene.max_box_size);
    read(sj, "max_pairwise_iou", c.scene.max_pairwise_iou);
    read(sj, "background_noise", c.scene.background_noise);
    read(sj, "grid", c.scene.grid);
  }
  if (j.contains("data")) {
    const auto& dj = j.at("data");
    expect_keys(dj, "data", {"train_scenes", "eval_scenes"});
    read(dj, "train_scenes", c.train_scenes);
    read(dj, "eval_scenes", c.eval_scenes);
  }
  if (j.contains("filter")) {
    const auto& fj = j.at("filter");
    expect_keys(fj, "filter",
                {"method", "rho", "max_priors", "oracle_error_rate", "tau", "summary_noise"});
    if (fj.contains("method")) c.filter.method = parse_filter_method(fj.at("method").get<std::string>());
    read(fj, "rho", c.filter.rho);
    read(fj, "max_priors", c.filter.max_priors);
    read(fj, "oracle_error_rate", c.filter.oracle_error_rate);
    read(fj, "tau", c.filter.tau);
    read(fj, "summary_noise", c.filter.summary_noise);
    // one L in the file drives both the training padding and the eval filter
    c.train.max_priors = c.filter.max_priors;
  }
  if (j.contains("detector")) {
    const auto& dj = j.at("detector");
    expect_keys(dj, "detector", {"queries", "query_dim", "hidden_dim"});
    read(dj, "queries", c.detector.num_queries);
    read(dj, "query_dim", c.detector.query_dim);
    read(dj, "hidden_dim", c.detector.hidden_dim);
  }
  if (j.contains("train")) {
    const auto& tj = j.at("train");
    expect_keys(tj, "train",
                {"total_epochs", "phase1_epochs", "base_lr", "lr_decay_factor", "decay_epoch",
                 "clip_max_norm", "batch_size", "lambda_l1", "lambda_giou", "lambda_cls",
                 "lambda_contrast", "tau_cls", "tau_contrast", "beta1", "beta2", "adam_eps",
                 "weight_decay", "distill", "guidance"});
    read(tj, "total_epochs", c.train.total_epochs);
    read(tj, "phase1_epochs", c.train.phase1_epochs);
    read(tj, "base_lr", c.train.base_lr);
    read(tj, "lr_decay_factor", c.train.lr_decay_factor);
    read(tj, "decay_epoch", c.train.decay_epoch);
    read(tj, "clip_max_norm", c.train.clip_max_norm);
    read(tj, "batch_size", c.train.batch_size);
    read(tj, "lambda_l1", c.train.weights.lambda_l1);
    read(tj, "lambda_giou", c.train.weights.lambda_giou);
    read(tj, "lambda_cls", c.train.weights.lambda_cls);
    read(tj, "lambda_contrast", c.train.weights.lambda_contrast);
    read(tj, "tau_cls", c.train.tau_cls);
    read(tj, "tau_contrast", c.train.tau_contrast);
    read(tj, "beta1", c.train.beta1);
    read(tj, "beta2", c.train.beta2);
    read(tj, "adam_eps", c.train.adam_eps);
    read(tj, "weight_decay", c.train.weight_decay);
    if (tj.contains("distill")) c.train.distill = parse_distill(tj.at("distill").get<std::string>());
    read(tj, "guidance", c.train.guidance);
  }
  if (j.contains("eval")) {
    const auto& ej = j.at("eval");
    expect_keys(ej, "eval", {"score_floor", "postprocess"});
    read(ej, "score_floor", c.score_floor);
    if (ej.contains("postprocess"))
      c.postprocess = parse_postprocess(ej.at("postprocess").get<std::string>());
  }
  if (j.contains("exec")) c.exec = parse_exec(j.at("exec").get<std::string>());

  c.finalize_and_validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config: parse error in " + path + ": " + e.what());
  }
  return run_config_from_json(j);
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["dimension"] = c.dimension;
  j["categories"] = {{"base", c.num_base}, {"novel", c.num_novel}};
  j["teacher"] = {{"min_separation_deg", c.min_separation_deg},
                  {"anchor_dim", c.anchor_dim},
                  {"alignment_noise", c.alignment_noise},
                  {"instance_noise", c.instance_noise},
                  {"template_count", c.template_count},
                  {"template_noise", c.template_noise}};
  j["scene"] = {{"objects_min", c.scene.min_objects},
                {"objects_max", c.scene.max_objects},
                {"box_min", c.scene.min_box_size},
                {"box_max", c.scene.max_box_size},
                {"max_pairwise_iou", c.scene.max_pairwise_iou},
                {"background_noise", c.scene.background_noise},
                {"grid", c.scene.grid}};
  j["data"] = {{"train_scenes", c.train_scenes}, {"eval_scenes", c.eval_scenes}};
  j["filter"] = {{"method", to_string(c.filter.method)},
                 {"rho", c.filter.rho},
                 {"max_priors", c.filter.max_priors},
                 {"oracle_error_rate", c.filter.oracle_error_rate},
                 {"tau", c.filter.tau},
                 {"summary_noise", c.filter.summary_noise}};
  j["detector"] = {{"queries", c.detector.num_queries},
                   {"query_dim", c.detector.query_dim},
                   {"hidden_dim", c.detector.hidden_dim}};
  j["train"] = {{"total_epochs", c.train.total_epochs},
                {"phase1_epochs", c.train.phase1_epochs},
                {"base_lr", c.train.base_lr},
                {"lr_decay_factor", c.train.lr_decay_factor},
                {"decay_epoch", c.train.decay_epoch},
                {"clip_max_norm", c.train.clip_max_norm},
                {"batch_size", c.train.batch_size},
                {"lambda_l1", c.train.weights.lambda_l1},
                {"lambda_giou", c.train.weights.lambda_giou},
                {"lambda_cls", c.train.weights.lambda_cls},
                {"lambda_contrast", c.train.weights.lambda_contrast},
                {"tau_cls", c.train.tau_cls},
                {"tau_contrast", c.train.tau_contrast},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"weight_decay", c.train.weight_decay},
                {"distill", to_string(c.train.distill)},
                {"guidance", c.train.guidance}};
  j["eval"] = {{"score_floor", c.score_floor}, {"postprocess", to_string(c.postprocess)}};
  j["exec"] = c.exec == ExecMode::openmp ? "openmp" : "serial";
  return j;
}

}  // namespace ovd
