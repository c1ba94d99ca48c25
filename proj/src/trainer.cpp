#include "ovd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ovd/rng.hpp"

namespace ovd {

void TrainConfig::validate() const {
  if (total_epochs < 1) throw std::invalid_argument("TrainConfig: total_epochs must be >= 1");
  if (phase1_epochs < 0 || phase1_epochs > total_epochs)
    throw std::invalid_argument("TrainConfig: phase1_epochs must be in [0, total_epochs]");
  if (base_lr <= 0.0) throw std::invalid_argument("TrainConfig: base_lr must be > 0");
  if (clip_max_norm <= 0.0) throw std::invalid_argument("TrainConfig: clip_max_norm must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (tau_cls <= 0.0 || tau_contrast <= 0.0)
    throw std::invalid_argument("TrainConfig: temperatures must be > 0");
  if (max_priors < 1) throw std::invalid_argument("TrainConfig: max_priors must be >= 1");
}

void save_train_log(const std::string& path, const TrainLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_train_log: cannot write " + path);
  out << "epoch,step,loss_total,loss_bbox,loss_cls,loss_contrast,grad_norm_pre_clip\n";
  for (const auto& r : log) {
    out << fmt::format("{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.step,
                       r.loss_total, r.loss_bbox, r.loss_cls, r.loss_contrast,
                       r.grad_norm_pre_clip);
  }
}

SceneLossResult total_loss(const std::vector<Embedding>& embeds, const std::vector<BBox>& boxes,
                           const SyntheticScene& scene,
                           const std::vector<Embedding>& teacher_features,
                           const MatchResult& match, const TextEmbeddingBank& bank,
                           const std::vector<int>& class_candidates, const LossWeights& weights,
                           double tau_cls, double tau_contrast, int phase, DistillMode distill) {
  const int n = static_cast<int>(embeds.size());
  const int m = static_cast<int>(scene.annotated_objects.size());
  if (static_cast<int>(teacher_features.size()) != m)
    throw std::invalid_argument("total_loss: teacher feature count != annotated count");
  if (m > 0 && static_cast<int>(match.pairs.size()) != m)
    throw std::invalid_argument("total_loss: match does not cover the annotated objects");
  const double denom = std::max(m, 1);

  SceneLossResult out;
  out.grad_embeds.assign(n, Embedding(embeds.empty() ? 0 : embeds[0].size(), 0.0));
  out.grad_boxes.assign(n, {0.0, 0.0, 0.0, 0.0});

  // query -> matched gt index
  std::vector<int> target_of(n, -1);
  for (const auto& [i, j] : match.pairs) target_of[j] = i;

  // (a) box regression over matched pairs
  for (const auto& [i, j] : match.pairs) {
    const BBoxLossResult r = bbox_loss(boxes[j], scene.annotated_objects[i].bbox, weights);
    out.bbox += r.value / denom;
    for (int k = 0; k < 4; ++k) out.grad_boxes[j][k] += r.grad[k] / denom;
  }

  // (b) focal classification over all queries on similarity probabilities
  for (int j = 0; j < n; ++j) {
    const std::vector<double> probs =
        similarity_prob_subset(embeds[j], bank, class_candidates, tau_cls);
    int target_idx = -1;
    if (target_of[j] >= 0) {
      const int cls = scene.annotated_objects[target_of[j]].category_id;
      const auto it = std::find(class_candidates.begin(), class_candidates.end(), cls);
      if (it == class_candidates.end())
        throw std::invalid_argument("total_loss: matched class missing from candidates");
      target_idx = static_cast<int>(it - class_candidates.begin());
    }
    const FocalResult f = focal_loss(probs, target_idx);
    out.cls += weights.lambda_cls * f.value / denom;
    similarity_prob_backward(embeds[j], bank, class_candidates, tau_cls, f.grad,
                             weights.lambda_cls / denom, out.grad_embeds[j]);
  }

  // (c) distillation, phase 2 only
  if (phase >= 2 && m > 0 && distill != DistillMode::none) {
    if (distill == DistillMode::contrastive) {
      const PairSet pairs = build_pairs(match, m, n);
      const ContrastiveResult c = contrastive_loss(teacher_features, embeds, pairs, tau_contrast);
      out.contrast += weights.lambda_contrast * c.value / denom;
      for (int j = 0; j < n; ++j)
        for (std::size_t d = 0; d < out.grad_embeds[j].size(); ++d)
          out.grad_embeds[j][d] += weights.lambda_contrast * c.grad_e[j][d] / denom;
    } else {
      std::vector<Embedding> matched(m);
      std::vector<int> slot(m);
      for (const auto& [i, j] : match.pairs) {
        matched[i] = embeds[j];
        slot[i] = j;
      }
      // l1_distill is already a mean over pairs; no extra 1/M here
      const MatchedGradResult c = l1_distill(teacher_features, matched);
      out.contrast += weights.lambda_contrast * c.value;
      for (int i = 0; i < m; ++i)
        for (std::size_t d = 0; d < out.grad_embeds[slot[i]].size(); ++d)
          out.grad_embeds[slot[i]][d] += weights.lambda_contrast * c.grad_e[i][d];
    }
  }

  out.total = out.bbox + out.cls + out.contrast;
  if (!std::isfinite(out.total))
    throw std::runtime_error("total_loss: non-finite loss at scene " +
                             std::to_string(scene.scene_id));
  return out;
}

double clip_gradients(DetectorParams& grads, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_gradients: max_norm must be > 0");
  double sq = 0.0;
  grads.for_each_array([&](const std::vector<double>& arr) {
    for (double x : arr) sq += x * x;
  });
  const double g = std::sqrt(sq);
  if (g > max_norm) {
    const double scale = max_norm / g;
    grads.for_each_array([&](std::vector<double>& arr) {
      for (auto& x : arr) x *= scale;
    });
  }
  return g;
}

AdamW::AdamW(const DetectorDims& dims, double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      weight_decay_(weight_decay),
      m_(DetectorParams::shaped(dims)),
      v_(DetectorParams::shaped(dims)) {}

namespace {

std::vector<std::vector<double>*> array_ptrs(DetectorParams& p) {
  std::vector<std::vector<double>*> out;
  p.for_each_array([&](std::vector<double>& arr) { out.push_back(&arr); });
  return out;
}

std::vector<const std::vector<double>*> array_ptrs(const DetectorParams& p) {
  std::vector<const std::vector<double>*> out;
  p.for_each_array([&](const std::vector<double>& arr) { out.push_back(&arr); });
  return out;
}

}  // namespace

void AdamW::update(DetectorParams& params, const DetectorParams& grads, double lr) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));

  auto ps = array_ptrs(params);
  auto gs = array_ptrs(grads);
  auto ms = array_ptrs(m_);
  auto vs = array_ptrs(v_);
  for (std::size_t a = 0; a < ps.size(); ++a) {
    auto& p = *ps[a];
    const auto& g = *gs[a];
    auto& m = *ms[a];
    auto& v = *vs[a];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[k]);
    }
  }
}

namespace {

struct SceneStep {
  SceneLossResult loss;
  DetectorParams grads;
};

}  // namespace

TrainResult train(const Dataset& train_split, const TeacherFeatureCache& cache,
                  const TextEmbeddingBank& bank, const CategorySpace& space,
                  const DetectorDims& dims, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_split.scenes.empty()) throw std::invalid_argument("train: empty train split");
  for (const auto& s : train_split.scenes) {
    if (static_cast<int>(s.annotated_objects.size()) > dims.num_queries)
      throw std::invalid_argument("train: scene " + std::to_string(s.scene_id) +
                                  " has more annotated objects than queries");
  }
  const std::vector<int> base_ids = space.ids_in_group(CategoryGroup::base);
  if (config.guidance && config.max_priors > dims.num_queries)
    throw std::invalid_argument("train: max_priors exceeds query count");
  if (config.guidance && config.max_priors > static_cast<int>(base_ids.size()))
    throw std::invalid_argument("train: max_priors exceeds base category count");

  // Training-time classification ranges over base categories only; annotations
  // and prior padding both stay inside the base group.
  const std::vector<int>& candidates = base_ids;
  CategorySpace base_space;
  for (int i = 0; i < static_cast<int>(base_ids.size()); ++i)
    base_space.categories.push_back({i, space.categories[base_ids[i]].name, CategoryGroup::base});

  TrainResult out;
  out.state = init_state(dims, derive_seed(config.seed, {0x1417ULL}));
  AdamW optimizer(dims, config.beta1, config.beta2, config.adam_eps, config.weight_decay);

  const int num_scenes = static_cast<int>(train_split.scenes.size());
  std::vector<int> order(num_scenes);
  int step = 0;
  for (int epoch = 0; epoch < config.total_epochs; ++epoch) {
    const int phase = (epoch < config.phase1_epochs) ? 1 : 2;
    const double lr =
        config.base_lr * ((epoch >= config.decay_epoch) ? config.lr_decay_factor : 1.0);

    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, {0x0bdeULL, static_cast<std::uint64_t>(epoch)}));
    for (int i = num_scenes - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);

    double epoch_loss = 0.0;
    int epoch_batches = 0;
    for (int start = 0; start < num_scenes; start += config.batch_size) {
      const int count = std::min(config.batch_size, num_scenes - start);
      std::vector<SceneStep> steps(count);

      parallel_for(count, config.exec, [&](int b) {
        const SyntheticScene& scene = train_split.scenes[order[start + b]];
        const int m = static_cast<int>(scene.annotated_objects.size());

        PriorAssignment priors;
        if (config.guidance) {
          const std::uint64_t pad_seed =
              derive_seed(config.seed, {0xadULL, static_cast<std::uint64_t>(epoch),
                                        static_cast<std::uint64_t>(scene.scene_id)});
          // map annotated ids into the base-only space for padding, then back
          std::vector<int> retained;
          for (int id : training_priors(scene)) {
            const auto it = std::find(base_ids.begin(), base_ids.end(), id);
            if (it == base_ids.end())
              throw std::invalid_argument("train: annotated novel category in train split");
            retained.push_back(static_cast<int>(it - base_ids.begin()));
          }
          std::vector<int> padded = pad_priors(retained, config.max_priors, base_space, pad_seed);
          for (auto& id : padded) id = base_ids[id];
          priors = assign_priors_to_queries(padded, bank, out.state);
        } else {
          priors = zero_priors(out.state);
        }

        ForwardResult fwd = forward(out.state, scene.context, priors);

        MatchResult match;
        std::vector<Embedding> teacher_features(m);
        if (m > 0) {
          std::vector<int> labels(m);
          std::vector<BBox> gt_boxes(m);
          for (int i = 0; i < m; ++i) {
            labels[i] = scene.annotated_objects[i].category_id;
            gt_boxes[i] = scene.annotated_objects[i].bbox;
            teacher_features[i] = cache.lookup(scene.scene_id, i);
          }
          const CostMatrix cost = match_cost(fwd.embeds, fwd.boxes, labels, gt_boxes, bank,
                                             config.tau_cls, config.weights);
          match = hungarian(cost);
        }

        steps[b].loss = total_loss(fwd.embeds, fwd.boxes, scene, teacher_features, match, bank,
                                   candidates, config.weights, config.tau_cls,
                                   config.tau_contrast, phase, config.distill);
        steps[b].grads = backward(out.state, fwd.trace, steps[b].loss.grad_embeds,
                                  steps[b].loss.grad_boxes);
      });

      // fixed-order reduction keeps the result independent of thread count
      DetectorParams batch_grads = DetectorParams::shaped(dims);
      TrainLogRow row;
      row.epoch = epoch;
      row.step = step;
      auto acc = array_ptrs(batch_grads);
      for (int b = 0; b < count; ++b) {
        auto part = array_ptrs(steps[b].grads);
        for (std::size_t a = 0; a < acc.size(); ++a)
          for (std::size_t k = 0; k < acc[a]->size(); ++k)
            (*acc[a])[k] += (*part[a])[k] / count;
        row.loss_total += steps[b].loss.total / count;
        row.loss_bbox += steps[b].loss.bbox / count;
        row.loss_cls += steps[b].loss.cls / count;
        row.loss_contrast += steps[b].loss.contrast / count;
      }
      row.grad_norm_pre_clip = clip_gradients(batch_grads, config.clip_max_norm);
      if (!std::isfinite(row.loss_total))
        throw std::runtime_error("train: non-finite batch loss at epoch " + std::to_string(epoch));
      optimizer.update(out.state.params, batch_grads, lr);
      out.log.push_back(row);
      epoch_loss += row.loss_total;
      ++epoch_batches;
      ++step;
    }
    if (on_epoch) on_epoch(epoch, epoch_loss / std::max(epoch_batches, 1));
  }
  return out;
}

Dataset augment_with_pseudo_labels(const Dataset& split,
                                   const std::vector<std::vector<PseudoCandidate>>& per_scene,
                                   double confidence_threshold, const TeacherSpace& teacher,
                                   std::uint64_t seed) {
  if (per_scene.size() != split.scenes.size())
    throw std::invalid_argument("augment_with_pseudo_labels: candidate list size mismatch");
  if (!(confidence_threshold > 0.0 && confidence_threshold < 1.0))
    throw std::invalid_argument("augment_with_pseudo_labels: threshold must be in (0,1)");

  Dataset out = split;
  for (std::size_t s = 0; s < out.scenes.size(); ++s) {
    auto& scene = out.scenes[s];
    int added = 0;
    for (const auto& cand : per_scene[s]) {
      if (cand.score < confidence_threshold) continue;
      bool overlaps = false;
      for (const auto& existing : scene.annotated_objects) {
        if (iou(cand.bbox, existing.bbox) >= 0.5) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
      GroundTruthObject obj;
      obj.bbox = cand.bbox;
      obj.category_id = cand.category_id;
      obj.teacher_feature = region_embedding(
          teacher, cand.category_id,
          derive_seed(seed, {0x5e0ULL, static_cast<std::uint64_t>(scene.scene_id),
                             static_cast<std::uint64_t>(added)}));
      scene.annotated_objects.push_back(std::move(obj));
      ++added;
    }
  }
  return out;
}

Dataset pseudo_label_round(const DetectorState& state, const Dataset& train_split,
                           double confidence_threshold, const TextEmbeddingBank& bank,
                           const CategorySpace& space, const TeacherSpace& teacher,
                           const TrainConfig& config) {
  if (space.size() > state.dims.num_queries)
    throw std::invalid_argument("pseudo_label_round: full-category priors need |C| <= N queries");

  std::vector<int> all_ids(space.size());
  std::iota(all_ids.begin(), all_ids.end(), 0);

  std::vector<std::vector<PseudoCandidate>> per_scene(train_split.scenes.size());
  parallel_for(static_cast<int>(train_split.scenes.size()), config.exec, [&](int s) {
    const SyntheticScene& scene = train_split.scenes[s];
    const PriorAssignment priors = assign_priors_to_queries(all_ids, bank, state);
    const ForwardResult fwd = forward(state, scene.context, priors);
    for (int j = 0; j < state.dims.num_queries; ++j) {
      const std::vector<double> probs =
          similarity_prob_subset(fwd.embeds[j], bank, all_ids, config.tau_cls);
      int best = 0;
      for (int k = 1; k < static_cast<int>(probs.size()); ++k)
        if (probs[k] > probs[best]) best = k;
      per_scene[s].push_back({fwd.boxes[j], all_ids[best], probs[best]});
    }
  });
  return augment_with_pseudo_labels(train_split, per_scene, confidence_threshold, teacher,
                                    config.seed);
}

}  // namespace ovd
