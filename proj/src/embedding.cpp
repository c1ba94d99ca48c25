#include "ovd/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ovd/rng.hpp"

namespace ovd {

double dot(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Embedding& a) { return std::sqrt(dot(a, a)); }

void normalize(Embedding& a) {
  const double n = norm(a);
  if (n <= 0.0) throw std::domain_error("normalize: zero-norm embedding");
  for (auto& x : a) x /= n;
}

Embedding normalized(const Embedding& a) {
  Embedding r = a;
  normalize(r);
  return r;
}

double cosine(const Embedding& a, const Embedding& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na <= 0.0 || nb <= 0.0) throw std::domain_error("cosine: zero-norm embedding");
  const double c = dot(a, b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

std::vector<int> CategorySpace::ids_in_group(CategoryGroup g) const {
  std::vector<int> ids;
  for (const auto& c : categories)
    if (c.group == g) ids.push_back(c.id);
  return ids;
}

void CategorySpace::validate() const {
  for (int i = 0; i < size(); ++i) {
    if (categories[i].id != i)
      throw std::invalid_argument("CategorySpace: ids must be contiguous from 0");
  }
}

CategorySpace CategorySpace::make(int num_base, int num_novel) {
  if (num_base < 0 || num_novel < 0 || num_base + num_novel < 2)
    throw std::invalid_argument("CategorySpace::make: need at least 2 categories");
  CategorySpace s;
  for (int i = 0; i < num_base; ++i)
    s.categories.push_back({i, "base_" + std::to_string(i), CategoryGroup::base});
  for (int i = 0; i < num_novel; ++i)
    s.categories.push_back({num_base + i, "novel_" + std::to_string(i), CategoryGroup::novel});
  return s;
}

namespace {

// Uniform direction on the unit sphere of the first `dims` coordinates,
// embedded in a `full` dimensional vector.
Embedding random_unit(Rng& rng, int full, int dims) {
  Embedding v(full, 0.0);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (int i = 0; i < dims; ++i) {
      v[i] = rng.normal();
      n2 += v[i] * v[i];
    }
  } while (n2 <= 0.0);
  const double inv = 1.0 / std::sqrt(n2);
  for (int i = 0; i < dims; ++i) v[i] *= inv;
  return v;
}

}  // namespace

TeacherSpace build_teacher_space(const CategorySpace& space, int dimension,
                                 double min_separation_rad, std::uint64_t seed,
                                 double alignment_noise, double instance_noise, int anchor_dim) {
  if (dimension < 4) throw std::invalid_argument("build_teacher_space: dimension must be >= 4");
  if (space.size() < 2) throw std::invalid_argument("build_teacher_space: need >= 2 categories");
  if (alignment_noise < 0.0 || instance_noise < 0.0)
    throw std::invalid_argument("build_teacher_space: noise scales must be >= 0");
  const int dims = (anchor_dim >= 2 && anchor_dim < dimension) ? anchor_dim : dimension;

  const double max_cos = std::cos(min_separation_rad);
  constexpr int kMaxTriesPerAnchor = 5000;

  TeacherSpace teacher;
  teacher.dimension = dimension;
  teacher.alignment_noise = alignment_noise;
  teacher.instance_noise = instance_noise;

  Rng rng(derive_seed(seed, {0x7e4c'1234ULL}));
  for (int c = 0; c < space.size(); ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTriesPerAnchor && !placed; ++attempt) {
      Embedding cand = random_unit(rng, dimension, dims);
      bool ok = true;
      for (const auto& prev : teacher.anchors) {
        if (dot(cand, prev) > max_cos) {
          ok = false;
          break;
        }
      }
      if (ok) {
        teacher.anchors.push_back(std::move(cand));
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("build_teacher_space: separation " +
                               std::to_string(min_separation_rad) +
                               " rad infeasible for category " + std::to_string(c) +
                               " within retry budget");
  }
  return teacher;
}

Embedding text_embedding(const TeacherSpace& teacher, int category_id, int template_count,
                         double template_noise, std::uint64_t seed) {
  if (category_id < 0 || category_id >= static_cast<int>(teacher.anchors.size()))
    throw std::invalid_argument("text_embedding: invalid category id");
  if (template_count < 1) throw std::invalid_argument("text_embedding: template_count must be >= 1");

  const Embedding& anchor = teacher.anchors[category_id];
  if (template_noise == 0.0) return anchor;  // exact zero-noise identity
  Rng rng(derive_seed(seed, {0x7457ULL, static_cast<std::uint64_t>(category_id)}));

  Embedding mean(teacher.dimension, 0.0);
  for (int t = 0; t < template_count; ++t) {
    for (int d = 0; d < teacher.dimension; ++d)
      mean[d] += anchor[d] + template_noise * rng.normal();
  }
  for (auto& x : mean) x /= template_count;
  normalize(mean);
  return mean;
}

TextEmbeddingBank build_text_bank(const TeacherSpace& teacher, const CategorySpace& space,
                                  int template_count, double template_noise, std::uint64_t seed) {
  TextEmbeddingBank bank;
  bank.dimension = teacher.dimension;
  bank.template_count = template_count;
  for (int c = 0; c < space.size(); ++c)
    bank.entries.push_back(text_embedding(teacher, c, template_count, template_noise, seed));
  return bank;
}

Embedding region_embedding(const TeacherSpace& teacher, int category_id, std::uint64_t seed) {
  if (category_id < 0 || category_id >= static_cast<int>(teacher.anchors.size()))
    throw std::invalid_argument("region_embedding: invalid category id");

  if (teacher.alignment_noise == 0.0 && teacher.instance_noise == 0.0)
    return teacher.anchors[category_id];  // exact zero-noise identity

  Rng rng(derive_seed(seed, {0x7269ULL, static_cast<std::uint64_t>(category_id)}));
  Embedding r = teacher.anchors[category_id];
  for (int d = 0; d < teacher.dimension; ++d)
    r[d] += teacher.alignment_noise * rng.normal();
  for (int d = 0; d < teacher.dimension; ++d)
    r[d] += teacher.instance_noise * rng.normal();
  normalize(r);
  return r;
}

TextEmbeddingBank import_embedding_bank(const std::string& path, const CategorySpace& space) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_embedding_bank: cannot open " + path);
  nlohmann::json j;
  in >> j;

  const int dim = j.at("dimension").get<int>();
  if (dim < 1) throw std::runtime_error("import_embedding_bank: bad dimension");

  std::vector<Embedding> entries(space.size());
  std::vector<bool> seen(space.size(), false);
  for (const auto& ej : j.at("entries")) {
    const int id = ej.at("id").get<int>();
    if (!space.valid_id(id))
      throw std::runtime_error("import_embedding_bank: unknown category id " + std::to_string(id));
    auto values = ej.at("values").get<std::vector<double>>();
    if (static_cast<int>(values.size()) != dim)
      throw std::runtime_error("import_embedding_bank: dimension mismatch for id " +
                               std::to_string(id));
    for (double v : values) {
      if (!std::isfinite(v))
        throw std::runtime_error("import_embedding_bank: non-finite value in entry id " +
                                 std::to_string(id));
    }
    Embedding e(values.begin(), values.end());
    if (norm(e) <= 0.0)
      throw std::runtime_error("import_embedding_bank: zero-norm entry id " + std::to_string(id));
    normalize(e);
    entries[id] = std::move(e);
    seen[id] = true;
  }
  for (int c = 0; c < space.size(); ++c) {
    if (!seen[c])
      throw std::runtime_error("import_embedding_bank: missing category id " + std::to_string(c));
  }

  TextEmbeddingBank bank;
  bank.dimension = dim;
  bank.template_count = j.value("template_count", 1);
  bank.entries = std::move(entries);
  return bank;
}

void export_embedding_bank(const std::string& path, const TextEmbeddingBank& bank,
                           const CategorySpace& space) {
  nlohmann::json j;
  j["dimension"] = bank.dimension;
  j["template_count"] = bank.template_count;
  auto& entries = j["entries"] = nlohmann::json::array();
  for (int c = 0; c < space.size(); ++c) {
    entries.push_back({{"id", c},
                       {"name", space.categories[c].name},
                       {"values", bank.entries[c]}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_embedding_bank: cannot write " + path);
  out << j.dump(2) << "\n";
}

}  // namespace ovd
