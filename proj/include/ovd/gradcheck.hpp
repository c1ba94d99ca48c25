#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ovd {

struct GradCheckRow {
  std::string component;
  double worst_error = 0.0;  // max over trials of the per-component error metric
};

// Finite-difference verification of every analytic gradient in the library:
// the standalone losses, both contrastive directions, the L1 baseline, and the
// full detector + total-loss composition. Deterministic given the seed.
std::vector<GradCheckRow> run_gradcheck(int trials, std::uint64_t seed = 1234);

}  // namespace ovd
