#pragma once

#include <utility>
#include <vector>

#include "ovd/embedding.hpp"
#include "ovd/matcher.hpp"

namespace ovd {

// Positive pairs for regional distillation, inherited from the assignment:
// teacher (ground-truth) index i paired with the student (query) it matched.
struct PairSet {
  std::vector<std::pair<int, int>> pairs;  // (teacher_index, student_index)
  int num_teachers = 0;                    // M
  int num_students = 0;                    // N
};

PairSet build_pairs(const MatchResult& match, int num_teachers, int num_students);

struct ContrastiveResult {
  double value = 0.0;
  std::vector<Embedding> grad_e;  // d value / d e_j for every student candidate
};

struct MatchedGradResult {
  double value = 0.0;
  std::vector<Embedding> grad_e;  // d value / d e_matched_i
};

// Teacher-to-student direction: for each teacher feature, softmax cross-entropy
// over all N student candidates with the matched student as the positive.
// Embeddings are L2-normalized inside; gradients are w.r.t. the raw inputs.
ContrastiveResult loss_teacher_to_student(const std::vector<Embedding>& teacher,
                                          const std::vector<Embedding>& students,
                                          const PairSet& pairs, double tau);

// Student-to-teacher direction: for each matched student, softmax cross-entropy
// over the M teacher features with its own teacher as the positive.
MatchedGradResult loss_student_to_teacher(const std::vector<Embedding>& teacher,
                                          const std::vector<Embedding>& matched_students,
                                          double tau);

// Arithmetic mean of the two directions; the student-to-teacher gradient is
// scattered back onto the matched student slots.
ContrastiveResult contrastive_loss(const std::vector<Embedding>& teacher,
                                   const std::vector<Embedding>& students, const PairSet& pairs,
                                   double tau);

// Elementwise L1 baseline: mean over pairs and dimensions of |r - e|.
MatchedGradResult l1_distill(const std::vector<Embedding>& teacher,
                             const std::vector<Embedding>& matched_students);

}  // namespace ovd
