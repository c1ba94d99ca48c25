#include "ovd/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "ovd/rng.hpp"

namespace ovd {

void SceneGenConfig::validate() const {
  if (min_objects < 0 || max_objects < min_objects)
    throw std::invalid_argument("SceneGenConfig: bad objects_per_scene range");
  if (min_box_size <= 0.0 || max_box_size < min_box_size || max_box_size > 1.0)
    throw std::invalid_argument("SceneGenConfig: bad box_size range");
  if (max_pairwise_iou < 0.0 || max_pairwise_iou >= 1.0)
    throw std::invalid_argument("SceneGenConfig: max_pairwise_iou must be in [0,1)");
  if (background_noise < 0.0)
    throw std::invalid_argument("SceneGenConfig: background_noise must be >= 0");
  if (grid < 2) throw std::invalid_argument("SceneGenConfig: grid must be >= 2");
  if (annotate_groups.empty())
    throw std::invalid_argument("SceneGenConfig: annotate_groups must be nonempty");
}

SyntheticScene generate_scene(const TeacherSpace& teacher, const CategorySpace& space,
                              const SceneGenConfig& config, std::uint64_t seed, int scene_id) {
  config.validate();
  Rng rng(derive_seed(seed, {0x5ce'0001ULL}));

  const int count = rng.uniform_int(config.min_objects, config.max_objects);
  constexpr int kBoxTries = 200;

  struct Placed {
    BBox box;
    int category;
    Embedding feature;
    double area;
  };
  std::vector<Placed> objects;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kBoxTries && !placed; ++attempt) {
      BBox box;
      box.w = rng.uniform(config.min_box_size, config.max_box_size);
      box.h = rng.uniform(config.min_box_size, config.max_box_size);
      box.cx = rng.uniform(box.w / 2.0, 1.0 - box.w / 2.0);
      box.cy = rng.uniform(box.h / 2.0, 1.0 - box.h / 2.0);
      bool ok = true;
      for (const auto& prev : objects) {
        if (iou(box, prev.box) > config.max_pairwise_iou) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      const int category = rng.uniform_int(0, space.size() - 1);
      Embedding r = region_embedding(teacher, category, rng.next_u64());
      objects.push_back({box, category, std::move(r), box.w * box.h});
      placed = true;
    }
    if (!placed)
      throw std::runtime_error("generate_scene: box rejection budget exhausted for scene " +
                               std::to_string(scene_id));
  }

  SyntheticScene scene;
  scene.scene_id = scene_id;
  scene.grid = config.grid;
  const int g = config.grid;
  scene.context.reserve(static_cast<std::size_t>(g) * g);
  for (int row = 0; row < g; ++row) {
    for (int col = 0; col < g; ++col) {
      const double cx = (col + 0.5) / g;
      const double cy = (row + 0.5) / g;
      // owner = smallest-area object whose box contains the cell center
      int owner = -1;
      for (int k = 0; k < static_cast<int>(objects.size()); ++k) {
        const BBox& b = objects[k].box;
        if (cx >= b.cx - b.w / 2.0 && cx <= b.cx + b.w / 2.0 && cy >= b.cy - b.h / 2.0 &&
            cy <= b.cy + b.h / 2.0) {
          if (owner < 0 || objects[k].area < objects[owner].area) owner = k;
        }
      }
      Embedding cell(teacher.dimension, 0.0);
      for (int d = 0; d < teacher.dimension; ++d) cell[d] = config.background_noise * rng.normal();
      if (owner >= 0) {
        for (int d = 0; d < teacher.dimension; ++d) cell[d] += objects[owner].feature[d];
      }
      scene.context.push_back(std::move(cell));
    }
  }

  for (const auto& obj : objects) {
    GroundTruthObject gt{obj.box, obj.category, obj.feature};
    if (config.annotate_groups.count(space.group_of(obj.category)) > 0)
      scene.annotated_objects.push_back(std::move(gt));
    else
      scene.hidden_objects.push_back(std::move(gt));
  }
  return scene;
}

std::pair<Dataset, Dataset> generate_dataset(int n_scenes, const TeacherSpace& teacher,
                                             const CategorySpace& space,
                                             const SceneGenConfig& train_config,
                                             const SceneGenConfig& eval_config, std::uint64_t seed,
                                             ExecMode mode) {
  return generate_dataset_sized(n_scenes, n_scenes, teacher, space, train_config, eval_config,
                                seed, mode);
}

std::pair<Dataset, Dataset> generate_dataset_sized(int n_train, int n_eval,
                                                   const TeacherSpace& teacher,
                                                   const CategorySpace& space,
                                                   const SceneGenConfig& train_config,
                                                   const SceneGenConfig& eval_config,
                                                   std::uint64_t seed, ExecMode mode) {
  if (n_train < 1 || n_eval < 1)
    throw std::invalid_argument("generate_dataset: scene counts must be >= 1");
  train_config.validate();
  eval_config.validate();

  Dataset train, eval;
  train.dimension = eval.dimension = teacher.dimension;
  train.grid = train_config.grid;
  eval.grid = eval_config.grid;
  train.scenes.resize(n_train);
  eval.scenes.resize(n_eval);

  parallel_for(n_train, mode, [&](int i) {
    train.scenes[i] = generate_scene(teacher, space, train_config,
                                     derive_seed(seed, {1, static_cast<std::uint64_t>(i)}), i);
  });
  parallel_for(n_eval, mode, [&](int i) {
    eval.scenes[i] =
        generate_scene(teacher, space, eval_config,
                       derive_seed(seed, {2, static_cast<std::uint64_t>(i)}), n_train + i);
  });
  return {std::move(train), std::move(eval)};
}

TeacherFeatureCache::TeacherFeatureCache(const Dataset& split) {
  for (const auto& scene : split.scenes) {
    for (int k = 0; k < static_cast<int>(scene.annotated_objects.size()); ++k)
      features_[{scene.scene_id, k}] = scene.annotated_objects[k].teacher_feature;
  }
}

const Embedding& TeacherFeatureCache::lookup(int scene_id, int object_index) const {
  const auto it = features_.find({scene_id, object_index});
  if (it == features_.end())
    throw std::out_of_range("TeacherFeatureCache: no feature for scene " +
                            std::to_string(scene_id) + " object " + std::to_string(object_index));
  return it->second;
}

void TeacherFeatureCache::save(const std::string& path) const {
  nlohmann::json j;
  auto& entries = j["entries"] = nlohmann::json::array();
  for (const auto& [key, feature] : features_)
    entries.push_back({{"scene", key.first}, {"object", key.second}, {"values", feature}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("TeacherFeatureCache::save: cannot write " + path);
  out << j.dump() << "\n";
}

TeacherFeatureCache TeacherFeatureCache::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("TeacherFeatureCache::load: cannot open " + path);
  nlohmann::json j;
  in >> j;
  TeacherFeatureCache cache;
  for (const auto& ej : j.at("entries")) {
    cache.features_[{ej.at("scene").get<int>(), ej.at("object").get<int>()}] =
        ej.at("values").get<std::vector<double>>();
  }
  return cache;
}

namespace {

nlohmann::json object_to_json(const GroundTruthObject& o) {
  return {{"bbox", {o.bbox.cx, o.bbox.cy, o.bbox.w, o.bbox.h}},
          {"category", o.category_id},
          {"teacher", o.teacher_feature}};
}

GroundTruthObject object_from_json(const nlohmann::json& j) {
  GroundTruthObject o;
  const auto& b = j.at("bbox");
  if (b.size() != 4) throw std::runtime_error("dataset: bbox must have 4 entries");
  o.bbox = BBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  o.category_id = j.at("category").get<int>();
  o.teacher_feature = j.at("teacher").get<std::vector<double>>();
  return o;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& dataset) {
  nlohmann::json j;
  j["dimension"] = dataset.dimension;
  j["grid"] = dataset.grid;
  auto& scenes = j["scenes"] = nlohmann::json::array();
  for (const auto& s : dataset.scenes) {
    nlohmann::json sj;
    sj["id"] = s.scene_id;
    sj["context"] = s.context;
    auto& ann = sj["annotated"] = nlohmann::json::array();
    for (const auto& o : s.annotated_objects) ann.push_back(object_to_json(o));
    auto& hid = sj["hidden"] = nlohmann::json::array();
    for (const auto& o : s.hidden_objects) hid.push_back(object_to_json(o));
    scenes.push_back(std::move(sj));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_dataset: cannot write " + path);
  out << j.dump() << "\n";
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  nlohmann::json j;
  in >> j;

  Dataset d;
  d.dimension = j.at("dimension").get<int>();
  d.grid = j.at("grid").get<int>();
  if (d.dimension < 1 || d.grid < 2) throw std::runtime_error("load_dataset: bad header");
  for (const auto& sj : j.at("scenes")) {
    SyntheticScene s;
    s.scene_id = sj.at("id").get<int>();
    s.grid = d.grid;
    s.context = sj.at("context").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(s.context.size()) != d.grid * d.grid)
      throw std::runtime_error("load_dataset: context size mismatch in scene " +
                               std::to_string(s.scene_id));
    for (const auto& c : s.context) {
      if (static_cast<int>(c.size()) != d.dimension)
        throw std::runtime_error("load_dataset: context dimension mismatch in scene " +
                                 std::to_string(s.scene_id));
    }
    for (const auto& oj : sj.at("annotated")) s.annotated_objects.push_back(object_from_json(oj));
    for (const auto& oj : sj.at("hidden")) s.hidden_objects.push_back(object_from_json(oj));
    d.scenes.push_back(std::move(s));
  }
  return d;
}

}  // namespace ovd
