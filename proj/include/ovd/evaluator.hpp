#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ovd/concept_filter.hpp"
#include "ovd/detector.hpp"
#include "ovd/parallel.hpp"
#include "ovd/scene.hpp"

namespace ovd {

struct Detection {
  int scene_id = 0;
  BBox bbox;
  int category_id = 0;
  double score = 0.0;
};

// How the per-query class score is assembled at inference time.
//   similarity_only: the temperature-scaled similarity probability itself.
//   combined: that probability multiplied by the classification-branch
//   confidence, i.e. the query's best probability over the training (base)
//   classes -- the stand-in for a learned-logit branch trained on base labels.
enum class Postprocess { similarity_only, combined };

struct InferOptions {
  FilterConfig filter;
  Postprocess postprocess = Postprocess::similarity_only;
  double score_floor = 0.05;
  bool guidance = true;  // when false: zero priors, classification over all categories
  double tau_cls = 0.07;
  std::uint64_t seed = 0;  // stream for filter noise / oracle flips / padding
};

// Runs the concept filter, pads priors to L, decodes, and classifies each
// query by the argmax similarity probability over the prior categories.
std::vector<Detection> infer(const DetectorState& state, const SyntheticScene& scene,
                             const TextEmbeddingBank& bank, const CategorySpace& space,
                             const InferOptions& options);

// Inference over a whole split; detections concatenated in scene order.
std::vector<Detection> infer_dataset(const DetectorState& state, const Dataset& split,
                                     const TextEmbeddingBank& bank, const CategorySpace& space,
                                     const InferOptions& options, ExecMode mode = ExecMode::openmp);

struct CategoryApRow {
  int category_id = 0;
  std::string name;
  CategoryGroup group = CategoryGroup::base;
  double ap50 = 0.0;
  double map = 0.0;  // mean AP over the configured IoU thresholds
  int gt_count = 0;
};

struct EvalResult {
  double ap50_novel = 0.0, ap50_base = 0.0, ap50_all = 0.0;
  double map_novel = 0.0, map_base = 0.0, map_all = 0.0;
  std::vector<CategoryApRow> per_category;
};

std::vector<double> default_iou_thresholds();  // 0.5:0.05:0.95

// Greedy per-category matching (descending score, scene id and insertion order
// as tie-breaks; highest-IoU unmatched ground truth wins), 101-point
// interpolated AP, group metrics as unweighted means over categories with
// ground truth.
EvalResult evaluate(const std::vector<Detection>& detections, const Dataset& eval_split,
                    const std::vector<double>& iou_thresholds, const CategorySpace& space);

void save_detections(const std::string& path, const std::vector<Detection>& detections);
std::vector<Detection> load_detections(const std::string& path);

void save_eval_csv(const std::string& path, const std::vector<std::pair<std::string, EvalResult>>& rows);
void save_per_category_csv(const std::string& path, const EvalResult& result);

}  // namespace ovd
