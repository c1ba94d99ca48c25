#include "ovd/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ovd {

namespace {

// log(sum_j exp(s_j)) with max subtraction. The exponentials are summed in
// ascending value order, which makes the result a function of the multiset of
// scores only — permuting candidates cannot change it even bitwise.
double log_sum_exp_sorted(const std::vector<double>& scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> terms(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j) terms[j] = std::exp(scores[j] - mx);
  std::sort(terms.begin(), terms.end());
  double sum = 0.0;
  for (double t : terms) sum += t;
  return mx + std::log(sum);
}

void check_tau(double tau) {
  if (tau <= 0.0) throw std::invalid_argument("contrastive: tau must be > 0");
}

// Pushes a gradient on the unit-normalized vector back to the raw vector.
void unnormalize_grad(const Embedding& raw, const Embedding& unit, const Embedding& g_unit,
                      Embedding& g_raw) {
  const double n = norm(raw);
  double gdotu = 0.0;
  for (std::size_t d = 0; d < raw.size(); ++d) gdotu += g_unit[d] * unit[d];
  for (std::size_t d = 0; d < raw.size(); ++d) g_raw[d] += (g_unit[d] - gdotu * unit[d]) / n;
}

}  // namespace

PairSet build_pairs(const MatchResult& match, int num_teachers, int num_students) {
  PairSet out;
  out.num_teachers = num_teachers;
  out.num_students = num_students;
  if (num_teachers == 0) return out;

  if (static_cast<int>(match.pairs.size()) != num_teachers)
    throw std::invalid_argument("build_pairs: match does not cover all ground truths");
  std::vector<char> seen_teacher(num_teachers, 0), seen_student(num_students, 0);
  for (const auto& [i, j] : match.pairs) {
    if (i < 0 || i >= num_teachers || seen_teacher[i])
      throw std::invalid_argument("build_pairs: teacher indices must cover [0, M) exactly once");
    if (j < 0 || j >= num_students || seen_student[j])
      throw std::invalid_argument("build_pairs: student indices must be distinct and in [0, N)");
    seen_teacher[i] = 1;
    seen_student[j] = 1;
    out.pairs.emplace_back(i, j);
  }
  return out;
}

ContrastiveResult loss_teacher_to_student(const std::vector<Embedding>& teacher,
                                          const std::vector<Embedding>& students,
                                          const PairSet& pairs, double tau) {
  check_tau(tau);
  const int m = static_cast<int>(teacher.size());
  const int n = static_cast<int>(students.size());

  ContrastiveResult out;
  out.grad_e.assign(n, Embedding(n > 0 ? students[0].size() : 0, 0.0));
  if (m == 0) return out;
  if (static_cast<int>(pairs.pairs.size()) != m)
    throw std::invalid_argument("loss_teacher_to_student: pair count != M");

  std::vector<Embedding> t_hat(m), e_hat(n);
  for (int i = 0; i < m; ++i) t_hat[i] = normalized(teacher[i]);
  for (int j = 0; j < n; ++j) e_hat[j] = normalized(students[j]);

  std::vector<Embedding> g_unit(n, Embedding(students[0].size(), 0.0));
  std::vector<double> scores(n);
  for (const auto& [i, pos] : pairs.pairs) {
    for (int j = 0; j < n; ++j) scores[j] = dot(t_hat[i], e_hat[j]) / tau;
    const double lse = log_sum_exp_sorted(scores);
    out.value += -scores[pos] + lse;
    for (int j = 0; j < n; ++j) {
      const double q = std::exp(scores[j] - lse);
      const double coeff = (q - (j == pos ? 1.0 : 0.0)) / tau;
      for (std::size_t d = 0; d < t_hat[i].size(); ++d) g_unit[j][d] += coeff * t_hat[i][d];
    }
  }
  for (int j = 0; j < n; ++j) unnormalize_grad(students[j], e_hat[j], g_unit[j], out.grad_e[j]);
  return out;
}

MatchedGradResult loss_student_to_teacher(const std::vector<Embedding>& teacher,
                                          const std::vector<Embedding>& matched_students,
                                          double tau) {
  check_tau(tau);
  const int m = static_cast<int>(teacher.size());
  MatchedGradResult out;
  out.grad_e.assign(matched_students.size(),
                    Embedding(m > 0 ? teacher[0].size() : 0, 0.0));
  if (m == 0) return out;
  if (static_cast<int>(matched_students.size()) != m)
    throw std::invalid_argument("loss_student_to_teacher: need one matched student per teacher");

  std::vector<Embedding> t_hat(m), e_hat(m);
  for (int i = 0; i < m; ++i) t_hat[i] = normalized(teacher[i]);
  for (int i = 0; i < m; ++i) e_hat[i] = normalized(matched_students[i]);

  std::vector<double> scores(m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) scores[j] = dot(e_hat[i], t_hat[j]) / tau;
    const double lse = log_sum_exp_sorted(scores);
    out.value += -scores[i] + lse;

    Embedding g_unit(e_hat[i].size(), 0.0);
    for (int j = 0; j < m; ++j) {
      const double q = std::exp(scores[j] - lse);
      const double coeff = (q - (j == i ? 1.0 : 0.0)) / tau;
      for (std::size_t d = 0; d < g_unit.size(); ++d) g_unit[d] += coeff * t_hat[j][d];
    }
    unnormalize_grad(matched_students[i], e_hat[i], g_unit, out.grad_e[i]);
  }
  return out;
}

ContrastiveResult contrastive_loss(const std::vector<Embedding>& teacher,
                                   const std::vector<Embedding>& students, const PairSet& pairs,
                                   double tau) {
  ContrastiveResult t2s = loss_teacher_to_student(teacher, students, pairs, tau);

  std::vector<Embedding> matched(teacher.size());
  for (const auto& [i, j] : pairs.pairs) matched[i] = students[j];
  MatchedGradResult s2t = loss_student_to_teacher(teacher, matched, tau);

  ContrastiveResult out;
  out.value = 0.5 * (t2s.value + s2t.value);
  out.grad_e = std::move(t2s.grad_e);
  for (auto& g : out.grad_e)
    for (auto& x : g) x *= 0.5;
  for (const auto& [i, j] : pairs.pairs)
    for (std::size_t d = 0; d < out.grad_e[j].size(); ++d) out.grad_e[j][d] += 0.5 * s2t.grad_e[i][d];
  return out;
}

MatchedGradResult l1_distill(const std::vector<Embedding>& teacher,
                             const std::vector<Embedding>& matched_students) {
  const int m = static_cast<int>(teacher.size());
  MatchedGradResult out;
  out.grad_e.assign(matched_students.size(),
                    Embedding(m > 0 ? teacher[0].size() : 0, 0.0));
  if (m == 0) return out;
  if (static_cast<int>(matched_students.size()) != m)
    throw std::invalid_argument("l1_distill: need one matched student per teacher");

  const std::size_t dim = teacher[0].size();
  const double scale = 1.0 / (static_cast<double>(m) * static_cast<double>(dim));
  for (int i = 0; i < m; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = teacher[i][d] - matched_students[i][d];
      out.value += std::abs(diff) * scale;
      out.grad_e[i][d] = (diff >= 0.0 ? -1.0 : 1.0) * scale;  // sign(0) -> +1 on |.|'
    }
  }
  return out;
}

}  // namespace ovd
