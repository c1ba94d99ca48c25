#include "ovd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ovd {

namespace {

struct Corners {
  double x1, y1, x2, y2;
  // clamp pass-through indicators for the pred-side chain rule
  double sx1, sx2, sy1, sy2;
};

double clamp01(double t) { return std::clamp(t, 0.0, 1.0); }

// Right-derivative of clamp to [0,1]: 1 on [0,1), 0 elsewhere.
double clamp_step(double t) { return (t >= 0.0 && t < 1.0) ? 1.0 : 0.0; }

Corners to_corners(const BBox& b) {
  Corners c;
  const double rx1 = b.cx - b.w / 2.0, rx2 = b.cx + b.w / 2.0;
  const double ry1 = b.cy - b.h / 2.0, ry2 = b.cy + b.h / 2.0;
  c.x1 = clamp01(rx1);
  c.x2 = clamp01(rx2);
  c.y1 = clamp01(ry1);
  c.y2 = clamp01(ry2);
  c.sx1 = clamp_step(rx1);
  c.sx2 = clamp_step(rx2);
  c.sy1 = clamp_step(ry1);
  c.sy2 = clamp_step(ry2);
  return c;
}

struct GiouParts {
  double value;
  // partials w.r.t. the first box's clamped corners (x1, y1, x2, y2)
  std::array<double, 4> dcorner;
};

GiouParts giou_with_corner_grad(const Corners& a, const Corners& b) {
  const double aw = a.x2 - a.x1, ah = a.y2 - a.y1;
  const double bw = b.x2 - b.x1, bh = b.y2 - b.y1;
  if (aw <= 0.0 || ah <= 0.0 || bw <= 0.0 || bh <= 0.0)
    throw std::domain_error("giou: degenerate box (zero area after clamping)");

  const double area_a = aw * ah;
  const double area_b = bw * bh;

  const double ix1 = std::max(a.x1, b.x1), ix2 = std::min(a.x2, b.x2);
  const double iy1 = std::max(a.y1, b.y1), iy2 = std::min(a.y2, b.y2);
  const double iwr = ix2 - ix1, ihr = iy2 - iy1;
  const double iw = std::max(0.0, iwr), ih = std::max(0.0, ihr);
  const double inter = iw * ih;

  const double uni = area_a + area_b - inter;

  const double cx1 = std::min(a.x1, b.x1), cx2 = std::max(a.x2, b.x2);
  const double cy1 = std::min(a.y1, b.y1), cy2 = std::max(a.y2, b.y2);
  const double cw = cx2 - cx1, ch = cy2 - cy1;
  const double enc = cw * ch;

  GiouParts out;
  out.value = inter / uni - (enc - uni) / enc;

  // dI w.r.t. a's corners (right-derivative conventions at ties)
  const double wi = (iwr >= 0.0) ? 1.0 : 0.0;
  const double hi = (ihr >= 0.0) ? 1.0 : 0.0;
  const double dI_dax1 = -wi * ((a.x1 >= b.x1) ? 1.0 : 0.0) * ih;
  const double dI_dax2 = wi * ((a.x2 < b.x2) ? 1.0 : 0.0) * ih;
  const double dI_day1 = -hi * ((a.y1 >= b.y1) ? 1.0 : 0.0) * iw;
  const double dI_day2 = hi * ((a.y2 < b.y2) ? 1.0 : 0.0) * iw;

  const double dA_dax1 = -ah, dA_dax2 = ah, dA_day1 = -aw, dA_day2 = aw;

  const double dC_dax1 = ((a.x1 < b.x1) ? 1.0 : 0.0) * -ch;
  const double dC_dax2 = ((a.x2 >= b.x2) ? 1.0 : 0.0) * ch;
  const double dC_day1 = ((a.y1 < b.y1) ? 1.0 : 0.0) * -cw;
  const double dC_day2 = ((a.y2 >= b.y2) ? 1.0 : 0.0) * cw;

  const std::array<double, 4> dI{dI_dax1, dI_day1, dI_dax2, dI_day2};
  const std::array<double, 4> dA{dA_dax1, dA_day1, dA_dax2, dA_day2};
  const std::array<double, 4> dC{dC_dax1, dC_day1, dC_dax2, dC_day2};

  // giou = I/U + U/C - 1, with dU = dA - dI
  for (int k = 0; k < 4; ++k) {
    const double dU = dA[k] - dI[k];
    out.dcorner[k] = (dI[k] * uni - inter * dU) / (uni * uni) + (dU * enc - uni * dC[k]) / (enc * enc);
  }
  return out;
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const Corners ca = to_corners(a), cb = to_corners(b);
  const double aw = ca.x2 - ca.x1, ah = ca.y2 - ca.y1;
  const double bw = cb.x2 - cb.x1, bh = cb.y2 - cb.y1;
  if (aw <= 0.0 || ah <= 0.0 || bw <= 0.0 || bh <= 0.0) return 0.0;
  const double iw = std::max(0.0, std::min(ca.x2, cb.x2) - std::max(ca.x1, cb.x1));
  const double ih = std::max(0.0, std::min(ca.y2, cb.y2) - std::max(ca.y1, cb.y1));
  const double inter = iw * ih;
  return inter / (aw * ah + bw * bh - inter);
}

double giou(const BBox& a, const BBox& b) {
  return giou_with_corner_grad(to_corners(a), to_corners(b)).value;
}

BBoxLossResult bbox_loss(const BBox& pred, const BBox& gt, const LossWeights& weights) {
  const Corners cp = to_corners(pred), cg = to_corners(gt);
  const GiouParts g = giou_with_corner_grad(cp, cg);

  const std::array<double, 4> dp{pred.cx - gt.cx, pred.cy - gt.cy, pred.w - gt.w, pred.h - gt.h};
  double l1 = 0.0;
  for (double d : dp) l1 += std::abs(d);

  BBoxLossResult out;
  out.value = weights.lambda_l1 * l1 + weights.lambda_giou * (1.0 - g.value);

  // chain corner partials back to (cx, cy, w, h); sign(0) fixed to +1
  const double d_dcx = g.dcorner[0] * cp.sx1 + g.dcorner[2] * cp.sx2;
  const double d_dcy = g.dcorner[1] * cp.sy1 + g.dcorner[3] * cp.sy2;
  const double d_dw = 0.5 * (g.dcorner[2] * cp.sx2 - g.dcorner[0] * cp.sx1);
  const double d_dh = 0.5 * (g.dcorner[3] * cp.sy2 - g.dcorner[1] * cp.sy1);
  const std::array<double, 4> dgiou{d_dcx, d_dcy, d_dw, d_dh};

  for (int k = 0; k < 4; ++k) {
    const double sgn = (dp[k] >= 0.0) ? 1.0 : -1.0;
    out.grad[k] = weights.lambda_l1 * sgn - weights.lambda_giou * dgiou[k];
  }
  return out;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double ex = std::exp(x);
  return ex / (1.0 + ex);
}

std::vector<double> similarity_prob(const Embedding& e, const TextEmbeddingBank& bank, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("similarity_prob: tau must be > 0");
  std::vector<double> probs(bank.entries.size());
  for (std::size_t i = 0; i < bank.entries.size(); ++i)
    probs[i] = logistic(cosine(e, bank.entries[i]) / tau);
  return probs;
}

std::vector<double> similarity_prob_subset(const Embedding& e, const TextEmbeddingBank& bank,
                                           const std::vector<int>& class_ids, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("similarity_prob: tau must be > 0");
  std::vector<double> probs(class_ids.size());
  for (std::size_t k = 0; k < class_ids.size(); ++k)
    probs[k] = logistic(cosine(e, bank.entries.at(class_ids[k])) / tau);
  return probs;
}

void similarity_prob_backward(const Embedding& e, const TextEmbeddingBank& bank,
                              const std::vector<int>& class_ids, double tau,
                              const std::vector<double>& dprobs, double scale, Embedding& de) {
  const double ne = norm(e);
  if (ne <= 0.0) throw std::domain_error("similarity_prob_backward: zero-norm embedding");
  const std::size_t dim = e.size();

  for (std::size_t k = 0; k < class_ids.size(); ++k) {
    if (dprobs[k] == 0.0) continue;
    const Embedding& t = bank.entries.at(class_ids[k]);  // unit norm by construction
    const double cos_et = dot(e, t) / ne;
    const double p = logistic(cos_et / tau);
    const double common = scale * dprobs[k] * p * (1.0 - p) / (tau * ne);
    // d cos / d e = (t - cos * e/|e|) / |e|
    for (std::size_t d = 0; d < dim; ++d) de[d] += common * (t[d] - cos_et * e[d] / ne);
  }
}

FocalResult focal_loss(const std::vector<double>& probs, int target_index, double alpha,
                       double gamma) {
  if (target_index >= static_cast<int>(probs.size()))
    throw std::invalid_argument("focal_loss: target_index out of range");
  constexpr double kEps = 1e-8;

  FocalResult out;
  out.grad.assign(probs.size(), 0.0);
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const double p = probs[k];
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("focal_loss: probs must lie in (0,1)");
    const double pc = std::clamp(p, kEps, 1.0 - kEps);
    const double pass = (p == pc) ? 1.0 : 0.0;
    if (static_cast<int>(k) == target_index) {
      const double om = 1.0 - pc;
      out.value += -alpha * std::pow(om, gamma) * std::log(pc);
      out.grad[k] = pass * (alpha * gamma * std::pow(om, gamma - 1.0) * std::log(pc) -
                            alpha * std::pow(om, gamma) / pc);
    } else {
      const double om = 1.0 - pc;
      out.value += -(1.0 - alpha) * std::pow(pc, gamma) * std::log(om);
      out.grad[k] = pass * (-(1.0 - alpha) * gamma * std::pow(pc, gamma - 1.0) * std::log(om) +
                            (1.0 - alpha) * std::pow(pc, gamma) / om);
    }
  }
  return out;
}

std::vector<double> finite_diff_gradient(const std::function<double(const std::vector<double>&)>& f,
                                         std::vector<double> point, double eps) {
  std::vector<double> grad(point.size());
  for (std::size_t k = 0; k < point.size(); ++k) {
    const double saved = point[k];
    point[k] = saved + eps;
    const double fp = f(point);
    point[k] = saved - eps;
    const double fm = f(point);
    point[k] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("finite_diff_gradient: non-finite function value");
    grad[k] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double max_component_error(const std::vector<double>& analytic, const std::vector<double>& fd) {
  if (analytic.size() != fd.size())
    throw std::invalid_argument("max_component_error: size mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double denom = std::max({1.0, std::abs(analytic[k]), std::abs(fd[k])});
    worst = std::max(worst, std::abs(analytic[k] - fd[k]) / denom);
  }
  return worst;
}

}  // namespace ovd
