#include "ovd/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ovd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest augmenting path assignment over index subsets (rows.size() <=
// cols.size()). Returns for each row (in the given order) the chosen entry of
// `cols`. Deterministic scan order.
std::vector<int> solve_subset(const CostMatrix& cost, const std::vector<int>& rows,
                              const std::vector<int>& cols) {
  const int n = static_cast<int>(rows.size());
  const int m = static_cast<int>(cols.size());

  // 1-based arrays with column 0 as the virtual start of each augmenting path.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  std::vector<char> used(m + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(rows[i0 - 1], cols[j - 1]) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) col_of_row[p[j] - 1] = cols[j - 1];
  }
  return col_of_row;
}

// Total cost of an assignment, summed in ascending row order. All totals in
// this module use this fold so that equal assignments produce identical values.
double row_ordered_total(const CostMatrix& cost, const std::vector<int>& col_of_row) {
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(col_of_row.size()); ++i) total += cost.at(i, col_of_row[i]);
  return total;
}

void validate(const CostMatrix& cost) {
  if (cost.rows < 1 || cost.cols < 1)
    throw std::invalid_argument("assignment: empty cost matrix");
  if (cost.rows > cost.cols)
    throw std::invalid_argument("assignment: more ground truths than queries (M > N)");
  for (double x : cost.data) {
    if (!std::isfinite(x)) throw std::invalid_argument("assignment: non-finite cost entry");
  }
}

}  // namespace

CostMatrix match_cost(const std::vector<Embedding>& pred_embeds,
                      const std::vector<BBox>& pred_boxes, const std::vector<int>& gt_labels,
                      const std::vector<BBox>& gt_boxes, const TextEmbeddingBank& bank, double tau,
                      const LossWeights& weights) {
  const int m = static_cast<int>(gt_labels.size());
  const int n = static_cast<int>(pred_embeds.size());
  if (m < 1 || n < 1) throw std::invalid_argument("match_cost: need M >= 1 and N >= 1");
  if (gt_boxes.size() != gt_labels.size() || pred_boxes.size() != pred_embeds.size())
    throw std::invalid_argument("match_cost: inconsistent input lengths");

  CostMatrix cost(m, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < m; ++i) {
      const double p = logistic(cosine(pred_embeds[j], bank.entries.at(gt_labels[i])) / tau);
      cost.at(i, j) = -p + bbox_loss(pred_boxes[j], gt_boxes[i], weights).value;
    }
  }
  return cost;
}

MatchResult hungarian(const CostMatrix& cost) {
  validate(cost);
  const int m = cost.rows, n = cost.cols;

  std::vector<int> all_rows(m), all_cols(n);
  for (int i = 0; i < m; ++i) all_rows[i] = i;
  for (int j = 0; j < n; ++j) all_cols[j] = j;

  const double best_total = row_ordered_total(cost, solve_subset(cost, all_rows, all_cols));
  const double tol = 1e-9 * std::max(1.0, std::abs(best_total));

  // Fix rows one by one, always taking the smallest column that still admits
  // an optimal completion. Yields the lexicographically smallest optimal list.
  std::vector<char> used(n, 0);
  std::vector<int> chosen(m, -1);
  double prefix = 0.0;
  for (int i = 0; i < m; ++i) {
    std::vector<int> rem_rows;
    for (int r = i + 1; r < m; ++r) rem_rows.push_back(r);

    double best = kInf;
    int best_j = -1;
    for (int j = 0; j < n; ++j) {
      if (used[j]) continue;
      double sub = 0.0;
      if (!rem_rows.empty()) {
        std::vector<int> rem_cols;
        for (int c = 0; c < n; ++c) {
          if (!used[c] && c != j) rem_cols.push_back(c);
        }
        std::vector<int> sub_rows_cols = solve_subset(cost, rem_rows, rem_cols);
        double t = 0.0;
        for (std::size_t r = 0; r < rem_rows.size(); ++r) t += cost.at(rem_rows[r], sub_rows_cols[r]);
        sub = t;
      }
      const double total = prefix + cost.at(i, j) + sub;
      if (total < best - tol) {
        best = total;
        best_j = j;
      }
    }
    chosen[i] = best_j;
    used[best_j] = 1;
    prefix += cost.at(i, best_j);
  }

  MatchResult out;
  for (int i = 0; i < m; ++i) out.pairs.emplace_back(i, chosen[i]);
  out.total_cost = row_ordered_total(cost, chosen);
  return out;
}

MatchResult brute_force_assignment(const CostMatrix& cost) {
  validate(cost);
  if (cost.cols > 8) throw std::invalid_argument("brute_force_assignment: N must be <= 8");
  const int m = cost.rows, n = cost.cols;

  std::vector<int> current(m, -1), best_assign;
  std::vector<char> used(n, 0);
  double best = kInf;

  // Depth-first over injections in lexicographic order; strict improvement
  // keeps the lexicographically smallest among equal-cost optima.
  auto recurse = [&](auto&& self, int row, double acc) -> void {
    if (row == m) {
      if (acc < best) {
        best = acc;
        best_assign = current;
      }
      return;
    }
    for (int j = 0; j < n; ++j) {
      if (used[j]) continue;
      used[j] = 1;
      current[row] = j;
      self(self, row + 1, acc + cost.at(row, j));
      used[j] = 0;
    }
  };
  recurse(recurse, 0, 0.0);

  MatchResult out;
  for (int i = 0; i < m; ++i) out.pairs.emplace_back(i, best_assign[i]);
  out.total_cost = row_ordered_total(cost, best_assign);
  return out;
}

}  // namespace ovd
