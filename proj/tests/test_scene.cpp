#include <doctest.h>

#include <filesystem>
#include <stdexcept>

#include "ovd/scene.hpp"
#include "ovd/losses.hpp"

using namespace ovd;

namespace {

constexpr double kPi = 3.14159265358979323846;

TeacherSpace default_teacher(const CategorySpace& space, double align = 0.05) {
  return build_teacher_space(space, 32, kPi / 4.0, 11, align, 0.05);
}

SceneGenConfig train_config() {
  SceneGenConfig c;
  c.annotate_groups = {CategoryGroup::base};
  return c;
}

SceneGenConfig eval_config() {
  SceneGenConfig c;
  c.annotate_groups = {CategoryGroup::base, CategoryGroup::novel};
  return c;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE("scene") {
  TEST_CASE("annotation protocol hides non-annotated groups") {
    const CategorySpace space = CategorySpace::make(4, 4);
    const TeacherSpace teacher = default_teacher(space);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const SyntheticScene s = generate_scene(teacher, space, train_config(), seed, 0);
      for (const auto& o : s.annotated_objects)
        CHECK(space.group_of(o.category_id) == CategoryGroup::base);
      for (const auto& o : s.hidden_objects)
        CHECK(space.group_of(o.category_id) == CategoryGroup::novel);
    }
  }

  TEST_CASE("scene generation is bitwise deterministic in the seed") {
    const CategorySpace space = CategorySpace::make(3, 1);
    const TeacherSpace teacher = default_teacher(space);
    const SyntheticScene a = generate_scene(teacher, space, train_config(), 91, 5);
    const SyntheticScene b = generate_scene(teacher, space, train_config(), 91, 5);
    CHECK(a == b);
    const SyntheticScene c = generate_scene(teacher, space, train_config(), 92, 5);
    CHECK_FALSE(a == c);
  }

  TEST_CASE("zero background noise reproduces the owner feature exactly") {
    // independent re-implementation of the cell assignment rule
    const CategorySpace space = CategorySpace::make(4, 2);
    const TeacherSpace teacher = default_teacher(space);
    SceneGenConfig cfg = eval_config();
    cfg.background_noise = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const SyntheticScene s = generate_scene(teacher, space, cfg, seed, 0);
      std::vector<const GroundTruthObject*> objects;
      for (const auto& o : s.annotated_objects) objects.push_back(&o);
      for (const auto& o : s.hidden_objects) objects.push_back(&o);

      for (int row = 0; row < cfg.grid; ++row) {
        for (int col = 0; col < cfg.grid; ++col) {
          const double cx = (col + 0.5) / cfg.grid, cy = (row + 0.5) / cfg.grid;
          const GroundTruthObject* owner = nullptr;
          for (const auto* o : objects) {
            const BBox& b = o->bbox;
            if (cx >= b.cx - b.w / 2 && cx <= b.cx + b.w / 2 && cy >= b.cy - b.h / 2 &&
                cy <= b.cy + b.h / 2) {
              if (!owner || b.w * b.h < owner->bbox.w * owner->bbox.h) owner = o;
            }
          }
          const Embedding& cell = s.context[row * cfg.grid + col];
          if (owner) {
            CHECK(cell == owner->teacher_feature);
          } else {
            CHECK(cell == Embedding(teacher.dimension, 0.0));
          }
        }
      }
    }
  }

  TEST_CASE("one object covering the image drives every cell") {
    const CategorySpace space = CategorySpace::make(2, 0);
    const TeacherSpace teacher = default_teacher(space);
    SceneGenConfig cfg = train_config();
    cfg.min_objects = cfg.max_objects = 1;
    cfg.min_box_size = cfg.max_box_size = 0.999;
    cfg.background_noise = 0.0;
    const SyntheticScene s = generate_scene(teacher, space, cfg, 3, 0);
    REQUIRE(s.annotated_objects.size() == 1);
    const Embedding& r = s.annotated_objects[0].teacher_feature;
    const Embedding& anchor = teacher.anchors[s.annotated_objects[0].category_id];
    for (const auto& cell : s.context) CHECK(cosine(cell, anchor) == cosine(r, anchor));
  }

  TEST_CASE("boxes satisfy the pairwise IoU bound and stay in the unit square") {
    const CategorySpace space = CategorySpace::make(4, 2);
    const TeacherSpace teacher = default_teacher(space);
    const SceneGenConfig cfg = eval_config();
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
      const SyntheticScene s = generate_scene(teacher, space, cfg, seed, 0);
      std::vector<BBox> boxes;
      for (const auto& o : s.annotated_objects) boxes.push_back(o.bbox);
      for (const auto& o : s.hidden_objects) boxes.push_back(o.bbox);
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        CHECK(boxes[i].cx - boxes[i].w / 2 >= -1e-12);
        CHECK(boxes[i].cx + boxes[i].w / 2 <= 1.0 + 1e-12);
        CHECK(boxes[i].cy - boxes[i].h / 2 >= -1e-12);
        CHECK(boxes[i].cy + boxes[i].h / 2 <= 1.0 + 1e-12);
        for (std::size_t j = i + 1; j < boxes.size(); ++j)
          CHECK(iou(boxes[i], boxes[j]) <= cfg.max_pairwise_iou + 1e-12);
      }
    }
  }

  TEST_CASE("dataset split sizes, ids and annotation groups") {
    const CategorySpace space = CategorySpace::make(3, 2);
    const TeacherSpace teacher = default_teacher(space);
    const auto [train, eval] =
        generate_dataset(10, teacher, space, train_config(), eval_config(), 7);
    REQUIRE(train.scenes.size() == 10);
    REQUIRE(eval.scenes.size() == 10);
    for (int i = 0; i < 10; ++i) {
      CHECK(train.scenes[i].scene_id == i);
      CHECK(eval.scenes[i].scene_id == 10 + i);
    }
    for (const auto& s : train.scenes)
      for (const auto& o : s.annotated_objects)
        CHECK(space.group_of(o.category_id) == CategoryGroup::base);

    // enough eval scenes must carry at least one annotated novel object
    int novel_annotations = 0;
    for (const auto& s : eval.scenes)
      for (const auto& o : s.annotated_objects)
        if (space.group_of(o.category_id) == CategoryGroup::novel) ++novel_annotations;
    CHECK(novel_annotations > 0);
  }

  TEST_CASE("dataset JSON round trip is field-for-field exact") {
    const CategorySpace space = CategorySpace::make(3, 1);
    const TeacherSpace teacher = default_teacher(space);
    const auto [train, eval] =
        generate_dataset(4, teacher, space, train_config(), eval_config(), 13);
    const std::string path = temp_path("ovd_dataset_roundtrip.json");
    save_dataset(path, train);
    CHECK(load_dataset(path) == train);
    std::filesystem::remove(path);
  }

  TEST_CASE("teacher feature cache mirrors the annotated objects") {
    const CategorySpace space = CategorySpace::make(3, 1);
    const TeacherSpace teacher = default_teacher(space);
    const auto [train, eval] =
        generate_dataset(6, teacher, space, train_config(), eval_config(), 23);

    const TeacherFeatureCache cache(train);
    std::size_t expected = 0;
    for (const auto& s : train.scenes) expected += s.annotated_objects.size();
    CHECK(cache.size() == expected);

    for (const auto& s : train.scenes)
      for (int k = 0; k < static_cast<int>(s.annotated_objects.size()); ++k)
        CHECK(cache.lookup(s.scene_id, k) == s.annotated_objects[k].teacher_feature);

    CHECK_THROWS_AS(cache.lookup(9999, 0), std::out_of_range);

    const std::string path = temp_path("ovd_cache_roundtrip.json");
    cache.save(path);
    CHECK(TeacherFeatureCache::load(path) == cache);
    std::filesystem::remove(path);
  }

  TEST_CASE("rejection budget exhaustion is reported") {
    const CategorySpace space = CategorySpace::make(2, 0);
    const TeacherSpace teacher = default_teacher(space);
    SceneGenConfig cfg = train_config();
    cfg.min_objects = cfg.max_objects = 30;  // cannot place 30 disjoint big boxes
    cfg.min_box_size = cfg.max_box_size = 0.5;
    cfg.max_pairwise_iou = 0.0;
    CHECK_THROWS_AS(generate_scene(teacher, space, cfg, 1, 0), std::runtime_error);
  }
}
