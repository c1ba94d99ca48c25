#include "ovd/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "ovd/losses.hpp"
#include "ovd/rng.hpp"

namespace ovd {

std::vector<Detection> infer(const DetectorState& state, const SyntheticScene& scene,
                             const TextEmbeddingBank& bank, const CategorySpace& space,
                             const InferOptions& options) {
  options.filter.validate(space.size());
  for (double x : flatten_params(state.params)) {
    if (!std::isfinite(x)) throw std::runtime_error("infer: non-finite detector state");
  }
  const std::uint64_t scene_seed =
      derive_seed(options.seed, {0x1f3aULL, static_cast<std::uint64_t>(scene.scene_id)});

  // resolve concept existence, then pad to exactly L priors
  std::vector<int> retained;
  if (options.filter.method == FilterMethod::similarity_threshold) {
    const Embedding summary =
        image_summary(scene, state.dims.embed_dim, options.filter.summary_noise, scene_seed);
    const std::vector<double> scores =
        score_concepts_similarity(summary, bank, options.filter.tau);
    retained = filter_by_threshold(scores, options.filter.rho);
  } else {
    std::vector<int> present;
    for (const auto* objects : {&scene.annotated_objects, &scene.hidden_objects})
      for (const auto& o : *objects) present.push_back(o.category_id);
    retained =
        binary_oracle_existence(present, space, options.filter.oracle_error_rate, scene_seed);
  }
  const std::vector<int> priors =
      pad_priors(retained, options.filter.max_priors, space, scene_seed);

  PriorAssignment assignment;
  std::vector<int> candidates;
  if (options.guidance) {
    assignment = assign_priors_to_queries(priors, bank, state);
    candidates = priors;
  } else {
    assignment = zero_priors(state);
    candidates.resize(space.size());
    std::iota(candidates.begin(), candidates.end(), 0);
  }

  const ForwardResult fwd = forward(state, scene.context, assignment);

  std::vector<int> base_ids = space.ids_in_group(CategoryGroup::base);
  std::vector<Detection> detections;
  for (int j = 0; j < state.dims.num_queries; ++j) {
    const std::vector<double> probs =
        similarity_prob_subset(fwd.embeds[j], bank, candidates, options.tau_cls);
    int best = 0;
    for (int k = 1; k < static_cast<int>(probs.size()); ++k)
      if (probs[k] > probs[best]) best = k;
    double score = probs[best];

    if (options.postprocess == Postprocess::combined && !base_ids.empty()) {
      const std::vector<double> base_probs =
          similarity_prob_subset(fwd.embeds[j], bank, base_ids, options.tau_cls);
      score *= *std::max_element(base_probs.begin(), base_probs.end());
    }
    if (score < options.score_floor) continue;
    detections.push_back({scene.scene_id, fwd.boxes[j], candidates[best], score});
  }
  return detections;
}

std::vector<Detection> infer_dataset(const DetectorState& state, const Dataset& split,
                                     const TextEmbeddingBank& bank, const CategorySpace& space,
                                     const InferOptions& options, ExecMode mode) {
  std::vector<std::vector<Detection>> per_scene(split.scenes.size());
  parallel_for(static_cast<int>(split.scenes.size()), mode, [&](int s) {
    per_scene[s] = infer(state, split.scenes[s], bank, space, options);
  });
  std::vector<Detection> all;
  for (auto& d : per_scene) all.insert(all.end(), d.begin(), d.end());
  return all;
}

std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back(0.5 + 0.05 * k);
  return t;
}

namespace {

// AP by 101-point interpolation from an ordered TP/FP sequence.
double average_precision(const std::vector<char>& is_tp, int total_gt) {
  if (total_gt == 0) return 0.0;
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (char t : is_tp) {
    t ? ++tp : ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / total_gt);
  }
  double ap = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0.0;
    for (std::size_t i = 0; i < precision.size(); ++i)
      if (recall[i] >= r) best = std::max(best, precision[i]);
    ap += best;
  }
  return ap / 101.0;
}

}  // namespace

EvalResult evaluate(const std::vector<Detection>& detections, const Dataset& eval_split,
                    const std::vector<double>& iou_thresholds, const CategorySpace& space) {
  if (iou_thresholds.empty()) throw std::invalid_argument("evaluate: need IoU thresholds");

  std::map<int, int> scene_index;
  for (int s = 0; s < static_cast<int>(eval_split.scenes.size()); ++s)
    scene_index[eval_split.scenes[s].scene_id] = s;
  for (const auto& d : detections) {
    if (!scene_index.count(d.scene_id))
      throw std::invalid_argument("evaluate: detection references unknown scene " +
                                  std::to_string(d.scene_id));
    if (!space.valid_id(d.category_id))
      throw std::invalid_argument("evaluate: detection has invalid category");
  }

  EvalResult out;
  for (int c = 0; c < space.size(); ++c) {
    // ground truths of this category, per scene
    std::map<int, std::vector<const GroundTruthObject*>> gt_by_scene;
    int total_gt = 0;
    for (const auto& scene : eval_split.scenes) {
      for (const auto& o : scene.annotated_objects) {
        if (o.category_id == c) {
          gt_by_scene[scene.scene_id].push_back(&o);
          ++total_gt;
        }
      }
    }

    // detections of this category, descending score, scene id then insertion
    // order as tie-breaks
    std::vector<std::pair<const Detection*, int>> dets;
    for (int i = 0; i < static_cast<int>(detections.size()); ++i)
      if (detections[i].category_id == c) dets.push_back({&detections[i], i});
    std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
      if (a.first->score != b.first->score) return a.first->score > b.first->score;
      if (a.first->scene_id != b.first->scene_id) return a.first->scene_id < b.first->scene_id;
      return a.second < b.second;
    });

    CategoryApRow row;
    row.category_id = c;
    row.name = space.categories[c].name;
    row.group = space.categories[c].group;
    row.gt_count = total_gt;

    double ap_sum = 0.0;
    for (double threshold : iou_thresholds) {
      std::map<int, std::vector<char>> used;
      for (const auto& [sid, gts] : gt_by_scene) used[sid].assign(gts.size(), 0);

      std::vector<char> is_tp;
      is_tp.reserve(dets.size());
      for (const auto& [det, idx] : dets) {
        const auto it = gt_by_scene.find(det->scene_id);
        int best_gt = -1;
        double best_iou = 0.0;
        if (it != gt_by_scene.end()) {
          for (int g = 0; g < static_cast<int>(it->second.size()); ++g) {
            if (used[det->scene_id][g]) continue;
            const double v = iou(det->bbox, it->second[g]->bbox);
            if (v >= threshold && v > best_iou) {
              best_iou = v;
              best_gt = g;
            }
          }
        }
        if (best_gt >= 0) {
          used[det->scene_id][best_gt] = 1;
          is_tp.push_back(1);
        } else {
          is_tp.push_back(0);
        }
      }
      const double ap = average_precision(is_tp, total_gt);
      ap_sum += ap;
      if (threshold == 0.5) row.ap50 = ap;
    }
    row.map = ap_sum / iou_thresholds.size();
    out.per_category.push_back(std::move(row));
  }

  auto group_mean = [&](auto accessor, auto predicate) {
    double sum = 0.0;
    int n = 0;
    for (const auto& row : out.per_category) {
      if (row.gt_count == 0 || !predicate(row)) continue;
      sum += accessor(row);
      ++n;
    }
    return n > 0 ? sum / n : 0.0;
  };
  auto is_novel = [](const CategoryApRow& r) { return r.group == CategoryGroup::novel; };
  auto is_base = [](const CategoryApRow& r) { return r.group == CategoryGroup::base; };
  auto any = [](const CategoryApRow&) { return true; };
  auto ap50 = [](const CategoryApRow& r) { return r.ap50; };
  auto map = [](const CategoryApRow& r) { return r.map; };
  out.ap50_novel = group_mean(ap50, is_novel);
  out.ap50_base = group_mean(ap50, is_base);
  out.ap50_all = group_mean(ap50, any);
  out.map_novel = group_mean(map, is_novel);
  out.map_base = group_mean(map, is_base);
  out.map_all = group_mean(map, any);
  return out;
}

void save_detections(const std::string& path, const std::vector<Detection>& detections) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& d : detections) {
    j.push_back({{"scene", d.scene_id},
                 {"bbox", {d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h}},
                 {"category", d.category_id},
                 {"score", d.score}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_detections: cannot write " + path);
  out << j.dump() << "\n";
}

std::vector<Detection> load_detections(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_detections: cannot open " + path);
  nlohmann::json j;
  in >> j;
  std::vector<Detection> out;
  for (const auto& dj : j) {
    Detection d;
    d.scene_id = dj.at("scene").get<int>();
    const auto& b = dj.at("bbox");
    d.bbox = BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    d.category_id = dj.at("category").get<int>();
    d.score = dj.at("score").get<double>();
    out.push_back(d);
  }
  return out;
}

void save_eval_csv(const std::string& path,
                   const std::vector<std::pair<std::string, EvalResult>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_eval_csv: cannot write " + path);
  out << "variant,ap50_novel,ap50_base,ap50_all,map_novel,map_base,map_all\n";
  for (const auto& [name, r] : rows) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", name, r.ap50_novel,
                       r.ap50_base, r.ap50_all, r.map_novel, r.map_base, r.map_all);
  }
}

void save_per_category_csv(const std::string& path, const EvalResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_per_category_csv: cannot write " + path);
  out << "category_id,name,group,gt_count,ap50,map\n";
  for (const auto& row : result.per_category) {
    out << fmt::format("{},{},{},{},{:.17g},{:.17g}\n", row.category_id, row.name,
                       row.group == CategoryGroup::novel ? "novel" : "base", row.gt_count,
                       row.ap50, row.map);
  }
}

}  // namespace ovd
