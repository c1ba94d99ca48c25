#pragma once

#include <cstdint>
#include <vector>

#include "ovd/embedding.hpp"
#include "ovd/scene.hpp"

namespace ovd {

enum class FilterMethod { similarity_threshold, binary_oracle };

// How the per-image semantic-prior set is produced at inference time.
struct FilterConfig {
  FilterMethod method = FilterMethod::similarity_threshold;
  double rho = 0.7;              // retain threshold on similarity scores
  int max_priors = 6;            // L: priors are padded/truncated to exactly this many
  double oracle_error_rate = 0.0;
  double tau = 0.2;              // temperature for the similarity scores
  double summary_noise = 0.1;    // noise on the image-summary embedding

  void validate(int category_count) const;
};

struct ConceptExistenceReport {
  std::vector<double> scores;  // per category, in (0,1)
  std::vector<int> retained;   // ordered by descending score, ties by ascending id
};

// Whole-image summary used by the similarity variant: normalized mean of the
// scene's teacher region features (annotated and hidden alike) plus noise.
Embedding image_summary(const SyntheticScene& scene, int dimension, double noise,
                        std::uint64_t seed);

// score_i = logistic(cos(summary, t_i) / tau).
std::vector<double> score_concepts_similarity(const Embedding& image_summary,
                                              const TextEmbeddingBank& bank, double tau);

// Categories with score >= rho, descending score, ties by ascending id.
std::vector<int> filter_by_threshold(const std::vector<double>& scores, double rho);

// Simulated yes/no oracle: present categories kept with prob 1 - error_rate,
// absent ones leak in with prob error_rate. Returned in ascending id order.
std::vector<int> binary_oracle_existence(const std::vector<int>& ground_truth_labels,
                                         const CategorySpace& space, double oracle_error_rate,
                                         std::uint64_t seed);

// Truncates to the top-L retained ids or pads with distinct categories sampled
// uniformly from the complement. Throws if L exceeds the category count.
std::vector<int> pad_priors(const std::vector<int>& retained, int max_priors,
                            const CategorySpace& space, std::uint64_t seed);

// Training-time priors: the distinct annotated category ids, ascending.
std::vector<int> training_priors(const SyntheticScene& scene);

}  // namespace ovd
