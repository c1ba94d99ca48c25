#include "ovd/concept_filter.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "ovd/losses.hpp"
#include "ovd/rng.hpp"

namespace ovd {

void FilterConfig::validate(int category_count) const {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("FilterConfig: rho must be in (0,1)");
  if (max_priors < 1) throw std::invalid_argument("FilterConfig: max_priors must be >= 1");
  if (max_priors > category_count)
    throw std::invalid_argument("FilterConfig: max_priors exceeds category count");
  if (oracle_error_rate < 0.0 || oracle_error_rate >= 1.0)
    throw std::invalid_argument("FilterConfig: oracle_error_rate must be in [0,1)");
  if (tau <= 0.0) throw std::invalid_argument("FilterConfig: tau must be > 0");
  if (summary_noise < 0.0) throw std::invalid_argument("FilterConfig: summary_noise must be >= 0");
}

Embedding image_summary(const SyntheticScene& scene, int dimension, double noise,
                        std::uint64_t seed) {
  Embedding summary(dimension, 0.0);
  int count = 0;
  for (const auto* objects : {&scene.annotated_objects, &scene.hidden_objects}) {
    for (const auto& o : *objects) {
      for (int d = 0; d < dimension; ++d) summary[d] += o.teacher_feature[d];
      ++count;
    }
  }
  if (count > 0)
    for (auto& x : summary) x /= count;

  Rng rng(derive_seed(seed, {0x50a'0001ULL}));
  for (int d = 0; d < dimension; ++d) summary[d] += noise * rng.normal();

  if (norm(summary) <= 0.0) summary[0] = 1.0;  // empty scene with zero noise
  normalize(summary);
  return summary;
}

std::vector<double> score_concepts_similarity(const Embedding& summary,
                                              const TextEmbeddingBank& bank, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("score_concepts_similarity: tau must be > 0");
  std::vector<double> scores(bank.entries.size());
  for (std::size_t i = 0; i < bank.entries.size(); ++i)
    scores[i] = logistic(cosine(summary, bank.entries[i]) / tau);
  return scores;
}

std::vector<int> filter_by_threshold(const std::vector<double>& scores, double rho) {
  if (!(rho > 0.0 && rho < 1.0))
    throw std::invalid_argument("filter_by_threshold: rho must be in (0,1)");
  std::vector<int> retained;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] >= rho) retained.push_back(i);
  std::stable_sort(retained.begin(), retained.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return retained;
}

std::vector<int> binary_oracle_existence(const std::vector<int>& ground_truth_labels,
                                         const CategorySpace& space, double oracle_error_rate,
                                         std::uint64_t seed) {
  if (oracle_error_rate < 0.0 || oracle_error_rate >= 1.0)
    throw std::invalid_argument("binary_oracle_existence: error rate must be in [0,1)");
  std::set<int> present(ground_truth_labels.begin(), ground_truth_labels.end());

  Rng rng(derive_seed(seed, {0x0'7ac1eULL}));
  std::vector<int> retained;
  for (int c = 0; c < space.size(); ++c) {
    const double flip = rng.uniform();
    const bool is_present = present.count(c) > 0;
    const bool answer_yes = is_present ? (flip >= oracle_error_rate) : (flip < oracle_error_rate);
    if (answer_yes) retained.push_back(c);
  }
  return retained;
}

std::vector<int> pad_priors(const std::vector<int>& retained, int max_priors,
                            const CategorySpace& space, std::uint64_t seed) {
  if (max_priors < 1) throw std::invalid_argument("pad_priors: L must be >= 1");
  if (max_priors > space.size())
    throw std::invalid_argument("pad_priors: L exceeds total category count");

  std::vector<int> priors(retained.begin(), retained.end());
  if (static_cast<int>(priors.size()) >= max_priors) {
    priors.resize(max_priors);
    return priors;
  }

  std::set<int> taken(priors.begin(), priors.end());
  std::vector<int> complement;
  for (int c = 0; c < space.size(); ++c)
    if (taken.count(c) == 0) complement.push_back(c);

  Rng rng(derive_seed(seed, {0xad'0001ULL}));
  while (static_cast<int>(priors.size()) < max_priors) {
    const int pick = rng.uniform_int(0, static_cast<int>(complement.size()) - 1);
    priors.push_back(complement[pick]);
    complement.erase(complement.begin() + pick);
  }
  return priors;
}

std::vector<int> training_priors(const SyntheticScene& scene) {
  std::set<int> distinct;
  for (const auto& o : scene.annotated_objects) distinct.insert(o.category_id);
  return {distinct.begin(), distinct.end()};
}

}  // namespace ovd
