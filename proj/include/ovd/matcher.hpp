#pragma once

#include <utility>
#include <vector>

#include "ovd/embedding.hpp"
#include "ovd/losses.hpp"

namespace ovd {

// M x N matching costs, rows = ground-truth objects, columns = query predictions.
struct CostMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // row-major

  CostMatrix() = default;
  CostMatrix(int m, int n) : rows(m), cols(n), data(static_cast<std::size_t>(m) * n, 0.0) {}

  double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }
};

struct MatchResult {
  std::vector<std::pair<int, int>> pairs;  // (gt_index, query_index), one per gt, ascending gt
  double total_cost = 0.0;
};

// entry(i, j) = -p_j(c_i) + bbox_loss(pred_box_j, gt_box_i, weights), with p the
// temperature-scaled similarity probability of query j for the class of gt i.
CostMatrix match_cost(const std::vector<Embedding>& pred_embeds,
                      const std::vector<BBox>& pred_boxes, const std::vector<int>& gt_labels,
                      const std::vector<BBox>& gt_boxes, const TextEmbeddingBank& bank, double tau,
                      const LossWeights& weights);

// Exact minimum-cost assignment of rows into columns (M <= N), shortest
// augmenting path with potentials. Among equal-cost optima returns the
// lexicographically smallest pair list. Throws std::invalid_argument on
// non-finite entries or M > N.
MatchResult hungarian(const CostMatrix& cost);

// Exhaustive search over all injections, same tie-break. Requires N <= 8.
MatchResult brute_force_assignment(const CostMatrix& cost);

}  // namespace ovd
