#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ovd {

// A point in the shared visual-semantic space. Text embeddings, teacher region
// features and student region embeddings all live here.
using Embedding = std::vector<double>;

double dot(const Embedding& a, const Embedding& b);
double norm(const Embedding& a);
void normalize(Embedding& a);             // throws std::domain_error on zero norm
Embedding normalized(const Embedding& a);

// a.b / (|a||b|), in [-1, 1]. Throws std::domain_error if either norm is zero.
double cosine(const Embedding& a, const Embedding& b);

enum class CategoryGroup { base, novel };

struct CategoryInfo {
  int id = 0;
  std::string name;
  CategoryGroup group = CategoryGroup::base;
};

// Label universe split into disjoint base/novel groups; ids contiguous from 0.
struct CategorySpace {
  std::vector<CategoryInfo> categories;

  int size() const { return static_cast<int>(categories.size()); }
  bool valid_id(int id) const { return id >= 0 && id < size(); }
  CategoryGroup group_of(int id) const { return categories.at(id).group; }
  std::vector<int> ids_in_group(CategoryGroup g) const;

  // Checks id contiguity; throws std::invalid_argument on violation.
  void validate() const;

  // "base_0".."base_{nb-1}", "novel_0".."novel_{nn-1}" with contiguous ids.
  static CategorySpace make(int num_base, int num_novel);
};

// Synthetic stand-in for a pretrained teacher's visual-semantic space: one unit
// anchor per category, with a separation bound, plus the noise scales that
// control how faithfully visual-side samples track the anchors.
struct TeacherSpace {
  int dimension = 0;
  double alignment_noise = 0.0;  // angular perturbation applied to every visual sample
  double instance_noise = 0.0;   // per-object perturbation on top of alignment noise
  std::vector<Embedding> anchors;
};

struct TextEmbeddingBank {
  int dimension = 0;
  int template_count = 0;
  std::vector<Embedding> entries;  // one unit-norm embedding per category id
};

// Samples unit anchors (uniform on the sphere spanned by the first anchor_dim
// coordinates when anchor_dim in [2, dimension), otherwise the full sphere) and
// rejection-resamples until all pairwise cosines are <= cos(min_separation_rad).
// Throws std::runtime_error when the retry budget is exhausted.
TeacherSpace build_teacher_space(const CategorySpace& space, int dimension,
                                 double min_separation_rad, std::uint64_t seed,
                                 double alignment_noise = 0.0, double instance_noise = 0.0,
                                 int anchor_dim = 0);

// Average of template_count noisy copies of the category anchor, renormalized.
Embedding text_embedding(const TeacherSpace& teacher, int category_id, int template_count,
                         double template_noise, std::uint64_t seed);

TextEmbeddingBank build_text_bank(const TeacherSpace& teacher, const CategorySpace& space,
                                  int template_count, double template_noise, std::uint64_t seed);

// Teacher feature r for one object crop: anchor perturbed by alignment and
// instance noise, renormalized.
Embedding region_embedding(const TeacherSpace& teacher, int category_id, std::uint64_t seed);

// Embedding-bank JSON: {"dimension": D, "entries": [{"id", "name", "values"}]}.
TextEmbeddingBank import_embedding_bank(const std::string& path, const CategorySpace& space);
void export_embedding_bank(const std::string& path, const TextEmbeddingBank& bank,
                           const CategorySpace& space);

}  // namespace ovd
