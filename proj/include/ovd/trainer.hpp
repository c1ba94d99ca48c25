#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "ovd/concept_filter.hpp"
#include "ovd/contrastive.hpp"
#include "ovd/detector.hpp"
#include "ovd/matcher.hpp"
#include "ovd/parallel.hpp"
#include "ovd/scene.hpp"

namespace ovd {

// What fills the distillation slot of the total loss in phase 2.
enum class DistillMode { contrastive, l1, none };

struct TrainConfig {
  int total_epochs = 30;
  int phase1_epochs = 10;   // guidance-only epochs before distillation starts
  double base_lr = 1e-4;
  double lr_decay_factor = 0.1;
  int decay_epoch = 11;
  double clip_max_norm = 0.1;
  int batch_size = 8;
  LossWeights weights;
  double tau_cls = 0.07;
  double tau_contrast = 0.07;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;
  DistillMode distill = DistillMode::contrastive;
  bool guidance = true;   // inject semantic priors into the queries
  int max_priors = 6;     // L: training priors are padded to this many
  ExecMode exec = ExecMode::openmp;

  void validate() const;
};

struct TrainLogRow {
  int epoch = 0;
  int step = 0;
  double loss_total = 0.0;
  double loss_bbox = 0.0;
  double loss_cls = 0.0;
  double loss_contrast = 0.0;
  double grad_norm_pre_clip = 0.0;
};
using TrainLog = std::vector<TrainLogRow>;

void save_train_log(const std::string& path, const TrainLog& log);

struct SceneLossResult {
  double total = 0.0;
  double bbox = 0.0;
  double cls = 0.0;
  double contrast = 0.0;
  std::vector<Embedding> grad_embeds;
  std::vector<std::array<double, 4>> grad_boxes;
};

// Combined objective for one scene: box regression over matched pairs, focal
// classification over all queries (unmatched queries target no-object), and
// the distillation term in phase 2, each averaged by the ground-truth count.
// class_candidates lists the category ids the classifier ranges over.
SceneLossResult total_loss(const std::vector<Embedding>& embeds, const std::vector<BBox>& boxes,
                           const SyntheticScene& scene,
                           const std::vector<Embedding>& teacher_features,
                           const MatchResult& match, const TextEmbeddingBank& bank,
                           const std::vector<int>& class_candidates, const LossWeights& weights,
                           double tau_cls, double tau_contrast, int phase,
                           DistillMode distill = DistillMode::contrastive);

// Scales gradients to the max norm when the global L2 norm exceeds it.
// Returns the pre-clip norm.
double clip_gradients(DetectorParams& grads, double max_norm);

// Decoupled-weight-decay adaptive moment optimizer.
class AdamW {
 public:
  AdamW(const DetectorDims& dims, double beta1, double beta2, double eps, double weight_decay);
  void update(DetectorParams& params, const DetectorParams& grads, double lr);

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  long step_ = 0;
  DetectorParams m_, v_;
};

struct TrainResult {
  DetectorState state;
  TrainLog log;
};

using EpochCallback = std::function<void(int epoch, double mean_loss)>;

// Deterministic two-phase training loop. Per-scene gradients within a batch
// are computed via parallel_for and reduced in scene order, so the result is
// independent of the execution mode.
TrainResult train(const Dataset& train_split, const TeacherFeatureCache& cache,
                  const TextEmbeddingBank& bank, const CategorySpace& space,
                  const DetectorDims& dims, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Appends predictions scored >= confidence_threshold that overlap no existing
// annotation at IoU >= 0.5; teacher features come from the predicted class.
// Returns a new split; the input is untouched.
Dataset pseudo_label_round(const DetectorState& state, const Dataset& train_split,
                           double confidence_threshold, const TextEmbeddingBank& bank,
                           const CategorySpace& space, const TeacherSpace& teacher,
                           const TrainConfig& config);

// Filtering core of the pseudo-label round, exposed for direct testing.
struct PseudoCandidate {
  BBox bbox;
  int category_id = 0;
  double score = 0.0;
};
Dataset augment_with_pseudo_labels(const Dataset& split,
                                   const std::vector<std::vector<PseudoCandidate>>& per_scene,
                                   double confidence_threshold, const TeacherSpace& teacher,
                                   std::uint64_t seed);

}  // namespace ovd
