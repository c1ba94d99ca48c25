#include <doctest.h>

#include <limits>
#include <stdexcept>

#include <cmath>

#include "ovd/losses.hpp"
#include "ovd/rng.hpp"

using namespace ovd;

namespace {

// independent corner-geometry oracle for IoU / union / enclosing box
struct BoxGeom {
  double x1, y1, x2, y2;
};
BoxGeom corners(const BBox& b) {
  return {std::clamp(b.cx - b.w / 2, 0.0, 1.0), std::clamp(b.cy - b.h / 2, 0.0, 1.0),
          std::clamp(b.cx + b.w / 2, 0.0, 1.0), std::clamp(b.cy + b.h / 2, 0.0, 1.0)};
}
double giou_oracle(const BBox& pa, const BBox& pb) {
  const BoxGeom a = corners(pa), b = corners(pb);
  const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = area_a + area_b - inter;
  const double cw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  const double ch = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  return inter / uni - (cw * ch - uni) / (cw * ch);
}

BBox random_box(Rng& rng) {
  BBox b;
  b.w = rng.uniform(0.1, 0.6);
  b.h = rng.uniform(0.1, 0.6);
  b.cx = rng.uniform(0.2, 0.8);
  b.cy = rng.uniform(0.2, 0.8);
  return b;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("giou closed-form cases") {
    const BBox a{0.25, 0.25, 0.5, 0.5};
    CHECK(giou(a, a) == doctest::Approx(1.0).epsilon(1e-15));

    const BBox b{0.75, 0.75, 0.5, 0.5};
    CHECK(giou(a, b) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(giou(a, b) == doctest::Approx(giou_oracle(a, b)).epsilon(1e-15));

    // side-by-side, touching: IoU 0 and the enclosing box equals the union
    const BBox left{0.25, 0.5, 0.5, 1.0}, right{0.75, 0.5, 0.5, 1.0};
    CHECK(giou(left, right) == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("giou agrees with the geometry oracle and is symmetric") {
    Rng rng(17);
    for (int t = 0; t < 200; ++t) {
      const BBox a = random_box(rng), b = random_box(rng);
      CHECK(giou(a, b) == doctest::Approx(giou_oracle(a, b)).epsilon(1e-13));
      CHECK(giou(a, b) == doctest::Approx(giou(b, a)).epsilon(1e-13));
      CHECK(giou(a, b) <= iou(a, b) + 1e-12);
      CHECK(giou(a, b) >= -1.0 - 1e-12);
      CHECK(giou(a, b) <= 1.0 + 1e-12);
    }
  }

  TEST_CASE("giou rejects degenerate boxes") {
    CHECK_THROWS_AS(giou(BBox{0.5, 0.5, 0.0, 0.2}, BBox{0.5, 0.5, 0.2, 0.2}), std::domain_error);
    // entirely outside the unit square collapses to zero area after clamping
    CHECK_THROWS_AS(giou(BBox{-2.0, 0.5, 0.2, 0.2}, BBox{0.5, 0.5, 0.2, 0.2}), std::domain_error);
  }

  TEST_CASE("bbox_loss closed-form cases") {
    const LossWeights w;
    const BBox g{0.5, 0.5, 0.3, 0.3};
    CHECK(bbox_loss(g, g, w).value == doctest::Approx(0.0).epsilon(1e-15));

    // lambda_l1 = 5, lambda_giou = 2 on the -0.5 giou pair
    const BBox a{0.25, 0.25, 0.5, 0.5}, b{0.75, 0.75, 0.5, 0.5};
    CHECK(bbox_loss(a, b, w).value == doctest::Approx(8.0).epsilon(1e-12));
  }

  TEST_CASE("bbox_loss is nonnegative and zero only at identity") {
    const LossWeights w;
    Rng rng(23);
    for (int t = 0; t < 100; ++t) {
      const BBox a = random_box(rng), b = random_box(rng);
      CHECK(bbox_loss(a, b, w).value >= 0.0);
    }
  }

  TEST_CASE("bbox_loss gradient matches finite differences") {
    const LossWeights w;
    Rng rng(31);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const BBox pred = random_box(rng), gt = random_box(rng);
      const BBoxLossResult res = bbox_loss(pred, gt, w);
      const auto f = [&](const std::vector<double>& x) {
        return bbox_loss(BBox{x[0], x[1], x[2], x[3]}, gt, w).value;
      };
      const auto fd = finite_diff_gradient(f, {pred.cx, pred.cy, pred.w, pred.h});
      worst = std::max(worst, max_component_error({res.grad.begin(), res.grad.end()}, fd));
    }
    CHECK(worst <= 1e-5);
  }

  TEST_CASE("similarity probability closed-form cases") {
    TextEmbeddingBank bank;
    bank.dimension = 4;
    bank.entries = {{1.0, 0.0, 0.0, 0.0}, {0.0, 1.0, 0.0, 0.0}};

    const Embedding e{1.0, 0.0, 0.0, 0.0};
    const auto probs = similarity_prob(e, bank, 0.07);
    const double expected = 1.0 / (1.0 + std::exp(-1.0 / 0.07));
    CHECK(probs[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(std::abs(probs[0] - 0.9999994) < 1e-6);
    CHECK(probs[1] == doctest::Approx(0.5).epsilon(1e-12));

    Embedding doubled = e;
    for (auto& x : doubled) x *= 2.0;
    CHECK(similarity_prob(doubled, bank, 0.07) == probs);  // exact scale invariance

    CHECK_THROWS_AS(similarity_prob(Embedding{0.0, 0.0, 0.0, 0.0}, bank, 0.07),
                    std::domain_error);
  }

  TEST_CASE("focal loss closed-form cases") {
    // near-perfect prediction drives the loss toward zero
    const FocalResult tiny = focal_loss({1.0 - 1e-7, 1e-7, 1e-7}, 0);
    CHECK(tiny.value < 1e-12);

    // single positive class at p = 0.5: 0.25 * 0.25 * ln 2
    const FocalResult mid = focal_loss({0.5}, 0, 0.25, 2.0);
    CHECK(mid.value == doctest::Approx(0.04332169878499658).epsilon(1e-12));

    // no-object target treats every class as negative
    const FocalResult noobj = focal_loss({0.5, 0.5}, -1, 0.25, 2.0);
    CHECK(noobj.value == doctest::Approx(2.0 * 0.75 * 0.25 * std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("focal loss with gamma 0 and alpha 0.5 is half the BCE") {
    Rng rng(47);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> probs(4);
      for (auto& p : probs) p = rng.uniform(0.05, 0.95);
      const int target = rng.uniform_int(-1, 3);
      const FocalResult f = focal_loss(probs, target, 0.5, 0.0);
      double bce = 0.0;
      for (int k = 0; k < 4; ++k)
        bce += (k == target) ? -std::log(probs[k]) : -std::log(1.0 - probs[k]);
      CHECK(f.value == doctest::Approx(0.5 * bce).epsilon(1e-12));
    }
  }

  TEST_CASE("focal gradient matches finite differences") {
    Rng rng(53);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      std::vector<double> probs(5);
      for (auto& p : probs) p = rng.uniform(0.05, 0.95);
      const int target = rng.uniform_int(-1, 4);
      const FocalResult res = focal_loss(probs, target);
      const auto f = [&](const std::vector<double>& x) { return focal_loss(x, target).value; };
      worst = std::max(worst, max_component_error(res.grad, finite_diff_gradient(f, probs)));
    }
    CHECK(worst <= 1e-5);
  }

  TEST_CASE("finite differences sanity") {
    const auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
    CHECK(finite_diff_gradient(square, {3.0}, 1e-5)[0] == doctest::Approx(6.0).epsilon(1e-7));

    const auto constant = [](const std::vector<double>&) { return 4.25; };
    const auto zero = finite_diff_gradient(constant, {1.0, 2.0, 3.0});
    for (double g : zero) CHECK(g == 0.0);

    const auto bad = [](const std::vector<double>&) {
      return std::numeric_limits<double>::quiet_NaN();
    };
    CHECK_THROWS_AS(finite_diff_gradient(bad, {1.0}), std::runtime_error);
  }
}
