#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ovd/embedding.hpp"
#include "ovd/losses.hpp"
#include "ovd/parallel.hpp"

namespace ovd {

struct GroundTruthObject {
  BBox bbox;
  int category_id = 0;
  Embedding teacher_feature;  // cached unit-norm r for this object crop

  bool operator==(const GroundTruthObject& o) const {
    return bbox.cx == o.bbox.cx && bbox.cy == o.bbox.cy && bbox.w == o.bbox.w &&
           bbox.h == o.bbox.h && category_id == o.category_id &&
           teacher_feature == o.teacher_feature;
  }
};

// One synthetic image: a G x G grid of context vectors (the encoder-output
// stand-in) plus the objects in it. Objects whose group is not annotated for
// this split are kept as hidden_objects so the evaluator can still see them.
struct SyntheticScene {
  int scene_id = 0;
  int grid = 0;
  std::vector<Embedding> context;  // grid*grid cells, row-major
  std::vector<GroundTruthObject> annotated_objects;
  std::vector<GroundTruthObject> hidden_objects;

  bool operator==(const SyntheticScene& o) const {
    return scene_id == o.scene_id && grid == o.grid && context == o.context &&
           annotated_objects == o.annotated_objects && hidden_objects == o.hidden_objects;
  }
};

struct SceneGenConfig {
  int min_objects = 1;
  int max_objects = 4;
  double min_box_size = 0.15;
  double max_box_size = 0.5;
  double max_pairwise_iou = 0.3;
  double background_noise = 0.1;
  int grid = 8;
  std::set<CategoryGroup> annotate_groups{CategoryGroup::base};

  void validate() const;
};

struct Dataset {
  int dimension = 0;
  int grid = 0;
  std::vector<SyntheticScene> scenes;

  bool operator==(const Dataset& o) const {
    return dimension == o.dimension && grid == o.grid && scenes == o.scenes;
  }
};

// Samples objects (boxes rejected until the pairwise IoU bound holds), paints
// grid cells from the owning object's teacher feature plus noise, and splits
// objects into annotated/hidden by group. Throws std::runtime_error when the
// rejection budget runs out.
SyntheticScene generate_scene(const TeacherSpace& teacher, const CategorySpace& space,
                              const SceneGenConfig& config, std::uint64_t seed, int scene_id = 0);

// Train split annotated per train_config.annotate_groups, eval split per
// eval_config; scene ids 0..n-1 and n..2n-1.
std::pair<Dataset, Dataset> generate_dataset(int n_scenes, const TeacherSpace& teacher,
                                             const CategorySpace& space,
                                             const SceneGenConfig& train_config,
                                             const SceneGenConfig& eval_config, std::uint64_t seed,
                                             ExecMode mode = ExecMode::openmp);

// Same, with independent split sizes; eval scene ids start at n_train.
std::pair<Dataset, Dataset> generate_dataset_sized(int n_train, int n_eval,
                                                   const TeacherSpace& teacher,
                                                   const CategorySpace& space,
                                                   const SceneGenConfig& train_config,
                                                   const SceneGenConfig& eval_config,
                                                   std::uint64_t seed,
                                                   ExecMode mode = ExecMode::openmp);

// Offline store of teacher region features: (scene_id, object_index) -> r for
// every annotated object. Write-once, read-only afterwards.
class TeacherFeatureCache {
 public:
  TeacherFeatureCache() = default;
  explicit TeacherFeatureCache(const Dataset& split);

  const Embedding& lookup(int scene_id, int object_index) const;
  std::size_t size() const { return features_.size(); }

  void save(const std::string& path) const;
  static TeacherFeatureCache load(const std::string& path);

  bool operator==(const TeacherFeatureCache& o) const { return features_ == o.features_; }

 private:
  std::map<std::pair<int, int>, Embedding> features_;
};

void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

}  // namespace ovd
