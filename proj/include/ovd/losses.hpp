#pragma once

#include <array>
#include <functional>
#include <vector>

#include "ovd/embedding.hpp"

namespace ovd {

// Box in normalized center/size coordinates. For all area computations the
// corner box [cx-w/2, cx+w/2] x [cy-h/2, cy+h/2] is clamped to the unit square.
struct BBox {
  double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};

struct LossWeights {
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  double lambda_cls = 2.0;
  double lambda_contrast = 1.0;
};

// Plain intersection-over-union on clamped boxes.
double iou(const BBox& a, const BBox& b);

// IoU(a,b) - (area(C) - area(a u b)) / area(C), C the smallest enclosing box.
// Throws std::domain_error when a box has zero area after clamping.
double giou(const BBox& a, const BBox& b);

struct BBoxLossResult {
  double value = 0.0;
  std::array<double, 4> grad{};  // d value / d (pred.cx, cy, w, h)
};

// lambda_l1 * sum_k |pred_k - gt_k| + lambda_giou * (1 - giou(pred, gt)).
// Subgradients at kinks are fixed to the right-derivative side.
BBoxLossResult bbox_loss(const BBox& pred, const BBox& gt, const LossWeights& weights);

// Numerically stable 1 / (1 + exp(-x)).
double logistic(double x);

// Per-class p_i = logistic(cos(e, t_i) / tau). Independent per class, not a
// distribution. Throws std::domain_error on zero-norm e.
std::vector<double> similarity_prob(const Embedding& e, const TextEmbeddingBank& bank, double tau);

// Same, restricted to a class subset (class_ids index into the bank).
std::vector<double> similarity_prob_subset(const Embedding& e, const TextEmbeddingBank& bank,
                                           const std::vector<int>& class_ids, double tau);

// Accumulates scale * sum_k dprobs[k] * d p_{class_ids[k]} / d e into de.
void similarity_prob_backward(const Embedding& e, const TextEmbeddingBank& bank,
                              const std::vector<int>& class_ids, double tau,
                              const std::vector<double>& dprobs, double scale, Embedding& de);

struct FocalResult {
  double value = 0.0;
  std::vector<double> grad;  // d value / d probs
};

// Sigmoid-style focal loss over independent per-class probabilities.
// target_index selects the positive class; -1 means no-object (all negative).
// Probabilities are clamped to [1e-8, 1 - 1e-8] before the logs.
FocalResult focal_loss(const std::vector<double>& probs, int target_index, double alpha = 0.25,
                       double gamma = 2.0);

// Central differences (f(x + eps e_k) - f(x - eps e_k)) / (2 eps).
// Throws std::runtime_error if f returns a non-finite value.
std::vector<double> finite_diff_gradient(const std::function<double(const std::vector<double>&)>& f,
                                         std::vector<double> point, double eps = 1e-6);

// |a - f| / max(1, |a|, |f|), maximized over components. The gradient-check
// metric used across the library.
double max_component_error(const std::vector<double>& analytic, const std::vector<double>& fd);

}  // namespace ovd
