#pragma once

#include "ovd/concept_filter.hpp"
#include "ovd/detector.hpp"
#include "ovd/embedding.hpp"
#include "ovd/scene.hpp"

namespace ovd::test {

struct TinySetup {
  CategorySpace space;
  TeacherSpace teacher;
  TextEmbeddingBank bank;
  Dataset train_split;
  Dataset eval_split;
  TeacherFeatureCache cache;
};

// Small end-to-end fixture: a few categories, low noise, short scenes.
inline TinySetup make_tiny_setup(int num_base = 4, int num_novel = 2, int scenes = 12,
                                 std::uint64_t seed = 1, double alignment_noise = 0.05,
                                 double background_noise = 0.1) {
  TinySetup s;
  s.space = CategorySpace::make(num_base, num_novel);
  s.teacher = build_teacher_space(s.space, 32, 3.14159265358979323846 / 4.0, seed,
                                  alignment_noise, 0.05, 12);
  s.bank = build_text_bank(s.teacher, s.space, 12, 0.02, seed + 1);

  SceneGenConfig train_cfg;
  train_cfg.grid = 6;
  train_cfg.min_objects = 1;
  train_cfg.max_objects = 3;
  train_cfg.background_noise = background_noise;
  train_cfg.annotate_groups = {CategoryGroup::base};
  SceneGenConfig eval_cfg = train_cfg;
  eval_cfg.annotate_groups = {CategoryGroup::base, CategoryGroup::novel};

  auto [train_split, eval_split] =
      generate_dataset(scenes, s.teacher, s.space, train_cfg, eval_cfg, seed);
  s.train_split = std::move(train_split);
  s.eval_split = std::move(eval_split);
  s.cache = TeacherFeatureCache(s.train_split);
  return s;
}

inline DetectorDims tiny_dims() { return DetectorDims{8, 32, 16, 24}; }

}  // namespace ovd::test
