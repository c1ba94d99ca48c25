#include "ovd/gradcheck.hpp"

#include <algorithm>
#include <numeric>

#include "ovd/contrastive.hpp"
#include "ovd/detector.hpp"
#include "ovd/losses.hpp"
#include "ovd/matcher.hpp"
#include "ovd/rng.hpp"
#include "ovd/scene.hpp"
#include "ovd/trainer.hpp"

namespace ovd {

namespace {

BBox random_box(Rng& rng) {
  BBox b;
  b.w = rng.uniform(0.1, 0.6);
  b.h = rng.uniform(0.1, 0.6);
  b.cx = rng.uniform(0.2, 0.8);
  b.cy = rng.uniform(0.2, 0.8);
  return b;
}

std::vector<Embedding> random_embeds(Rng& rng, int count, int dim) {
  std::vector<Embedding> out(count);
  for (auto& e : out) {
    e = rng.normal_vec(dim);
    for (auto& x : e) x += 0.05;  // keep away from the zero-norm pole
  }
  return out;
}

std::vector<double> flatten(const std::vector<Embedding>& v) {
  std::vector<double> flat;
  for (const auto& e : v) flat.insert(flat.end(), e.begin(), e.end());
  return flat;
}

std::vector<Embedding> unflatten(const std::vector<double>& flat, int count, int dim) {
  std::vector<Embedding> out(count, Embedding(dim));
  for (int i = 0; i < count; ++i)
    std::copy(flat.begin() + i * dim, flat.begin() + (i + 1) * dim, out[i].begin());
  return out;
}

double check_bbox(Rng& rng) {
  const LossWeights w;
  const BBox pred = random_box(rng), gt = random_box(rng);
  const BBoxLossResult res = bbox_loss(pred, gt, w);
  const auto f = [&](const std::vector<double>& x) {
    return bbox_loss(BBox{x[0], x[1], x[2], x[3]}, gt, w).value;
  };
  const std::vector<double> fd = finite_diff_gradient(f, {pred.cx, pred.cy, pred.w, pred.h});
  return max_component_error({res.grad.begin(), res.grad.end()}, fd);
}

double check_focal(Rng& rng) {
  std::vector<double> probs(5);
  for (auto& p : probs) p = rng.uniform(0.05, 0.95);
  const int target = rng.uniform_int(-1, 4);
  const FocalResult res = focal_loss(probs, target);
  const auto f = [&](const std::vector<double>& x) { return focal_loss(x, target).value; };
  return max_component_error(res.grad, finite_diff_gradient(f, probs));
}

PairSet random_pairs(Rng& rng, int m, int n) {
  std::vector<int> cols(n);
  std::iota(cols.begin(), cols.end(), 0);
  for (int i = n - 1; i > 0; --i) std::swap(cols[i], cols[rng.uniform_int(0, i)]);
  PairSet p;
  p.num_teachers = m;
  p.num_students = n;
  for (int i = 0; i < m; ++i) p.pairs.emplace_back(i, cols[i]);
  return p;
}

double check_t2s(Rng& rng) {
  const int m = 3, n = 8, dim = 6;
  const double tau = 0.07;
  const auto teacher = random_embeds(rng, m, dim);
  const auto students = random_embeds(rng, n, dim);
  const PairSet pairs = random_pairs(rng, m, n);

  const ContrastiveResult res = loss_teacher_to_student(teacher, students, pairs, tau);
  const auto f = [&](const std::vector<double>& x) {
    return loss_teacher_to_student(teacher, unflatten(x, n, dim), pairs, tau).value;
  };
  return max_component_error(flatten(res.grad_e), finite_diff_gradient(f, flatten(students)));
}

double check_s2t(Rng& rng) {
  const int m = 5, dim = 6;
  const double tau = 0.07;
  const auto teacher = random_embeds(rng, m, dim);
  const auto matched = random_embeds(rng, m, dim);

  const MatchedGradResult res = loss_student_to_teacher(teacher, matched, tau);
  const auto f = [&](const std::vector<double>& x) {
    return loss_student_to_teacher(teacher, unflatten(x, m, dim), tau).value;
  };
  return max_component_error(flatten(res.grad_e), finite_diff_gradient(f, flatten(matched)));
}

double check_contrastive(Rng& rng) {
  const int m = 3, n = 8, dim = 6;
  const double tau = 0.07;
  const auto teacher = random_embeds(rng, m, dim);
  const auto students = random_embeds(rng, n, dim);
  const PairSet pairs = random_pairs(rng, m, n);

  const ContrastiveResult res = contrastive_loss(teacher, students, pairs, tau);
  const auto f = [&](const std::vector<double>& x) {
    return contrastive_loss(teacher, unflatten(x, n, dim), pairs, tau).value;
  };
  return max_component_error(flatten(res.grad_e), finite_diff_gradient(f, flatten(students)));
}

double check_l1(Rng& rng) {
  const int m = 3, dim = 6;
  const auto teacher = random_embeds(rng, m, dim);
  const auto matched = random_embeds(rng, m, dim);
  const MatchedGradResult res = l1_distill(teacher, matched);
  const auto f = [&](const std::vector<double>& x) {
    return l1_distill(teacher, unflatten(x, m, dim)).value;
  };
  return max_component_error(flatten(res.grad_e), finite_diff_gradient(f, flatten(matched)));
}

// Full composition: detector forward from parameters through matching-frozen
// total loss, against finite differences over every parameter.
double check_detector(Rng& rng) {
  const DetectorDims dims{4, 8, 8, 16};
  const int cells = 16;  // 4 x 4 grid

  const CategorySpace space = CategorySpace::make(3, 1);
  const TeacherSpace teacher =
      build_teacher_space(space, dims.embed_dim, 0.6, rng.next_u64(), 0.1, 0.1);
  const TextEmbeddingBank bank = build_text_bank(teacher, space, 1, 0.0, rng.next_u64());

  SyntheticScene scene;
  scene.scene_id = 0;
  scene.grid = 4;
  for (int m = 0; m < cells; ++m) {
    Embedding cell = rng.normal_vec(dims.embed_dim);
    for (auto& x : cell) x *= 0.5;
    scene.context.push_back(std::move(cell));
  }
  std::vector<Embedding> teacher_features;
  for (int i = 0; i < 2; ++i) {
    GroundTruthObject obj;
    obj.bbox = random_box(rng);
    obj.category_id = i;
    obj.teacher_feature = region_embedding(teacher, i, rng.next_u64());
    teacher_features.push_back(obj.teacher_feature);
    scene.annotated_objects.push_back(std::move(obj));
  }

  const std::vector<int> priors{0, 1};
  const std::vector<int> candidates{0, 1, 2};
  const LossWeights weights;
  const double tau = 0.07;

  DetectorState state = init_state(dims, rng.next_u64());

  // freeze the assignment at the base point; it is locally constant
  const PriorAssignment assignment = assign_priors_to_queries(priors, bank, state);
  const ForwardResult base = forward(state, scene.context, assignment);
  std::vector<int> labels{0, 1};
  std::vector<BBox> gt_boxes{scene.annotated_objects[0].bbox, scene.annotated_objects[1].bbox};
  const MatchResult match =
      hungarian(match_cost(base.embeds, base.boxes, labels, gt_boxes, bank, tau, weights));

  const SceneLossResult loss = total_loss(base.embeds, base.boxes, scene, teacher_features, match,
                                          bank, candidates, weights, tau, tau, 2);
  std::vector<std::array<double, 4>> grad_boxes = loss.grad_boxes;
  const DetectorParams analytic = backward(state, base.trace, loss.grad_embeds, grad_boxes);

  const auto f = [&](const std::vector<double>& flat) {
    DetectorState s = state;
    unflatten_params(s.params, flat);
    const PriorAssignment a = assign_priors_to_queries(priors, bank, s);
    const ForwardResult fwd = forward(s, scene.context, a);
    return total_loss(fwd.embeds, fwd.boxes, scene, teacher_features, match, bank, candidates,
                      weights, tau, tau, 2)
        .total;
  };
  const std::vector<double> fd = finite_diff_gradient(f, flatten_params(state.params), 1e-6);
  return max_component_error(flatten_params(analytic), fd);
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("run_gradcheck: trials must be >= 1");
  Rng rng(derive_seed(seed, {0x9cULL}));

  std::vector<GradCheckRow> rows{{"bbox_loss", 0.0},
                                 {"focal_loss", 0.0},
                                 {"teacher_to_student", 0.0},
                                 {"student_to_teacher", 0.0},
                                 {"contrastive_loss", 0.0},
                                 {"l1_distill", 0.0},
                                 {"detector_total_loss", 0.0}};
  for (int t = 0; t < trials; ++t) {
    rows[0].worst_error = std::max(rows[0].worst_error, check_bbox(rng));
    rows[1].worst_error = std::max(rows[1].worst_error, check_focal(rng));
    rows[2].worst_error = std::max(rows[2].worst_error, check_t2s(rng));
    rows[3].worst_error = std::max(rows[3].worst_error, check_s2t(rng));
    rows[4].worst_error = std::max(rows[4].worst_error, check_contrastive(rng));
    rows[5].worst_error = std::max(rows[5].worst_error, check_l1(rng));
    rows[6].worst_error = std::max(rows[6].worst_error, check_detector(rng));
  }
  return rows;
}

}  // namespace ovd
