#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mtlsed/audiogen.hpp"
#include "mtlsed/frontend.hpp"
#include "mtlsed/model.hpp"
#include "mtlsed/taxonomy.hpp"

namespace mtlsed {

struct TrainConfig {
  double alpha = 0.8;
  std::size_t batch_size = 8;
  double max_lr = 1e-3;
  std::size_t ramp_epochs = 50;
  std::size_t stage1_epochs = 30;
  std::size_t stage2_epochs = 60;
  double pseudo_threshold = 0.5;
  std::string taxonomy = "proposed";
  std::uint64_t seed = 0;
  /// SpecAugment + FilterAugment on training features.
  bool augment = true;
  AugmentPolicy augment_policy;
  /// Test hook: drop the ACC term (and the ACC forward pass) from the code path.
  bool omit_acc_loss = false;

  void validate() const;
};

/// Seconds covered by one model output frame.
double output_hop_seconds(const ModelConfig& c);

/// frames x classes 0/1 matrix; frame i is active for an event when
/// [i*hop, (i+1)*hop) overlaps [onset, offset).
std::vector<float> rasterize(std::span<const EventLabel> events, std::size_t frames, double hop_seconds,
                             std::size_t classes = kNumEventClasses);
std::vector<float> rasterize(std::span<const AccLabel> events, std::size_t frames, double hop_seconds,
                             std::size_t classes = kNumAccClasses);

/// One training clip. Strong clips carry events, weak and pseudo-weak clips carry tags.
struct TrainingClip {
  std::string clip_id;
  std::shared_ptr<const LogMel> features;
  bool strong = false;
  std::vector<EventLabel> events;
  std::set<EventClass> tags;
};

struct ClipTargets {
  bool strong = false;
  std::vector<float> sed_frame;  // frames x 10, strong clips
  std::vector<float> acc_frame;  // frames x 4, strong clips
  std::vector<float> sed_clip;   // 10, weak clips
  std::vector<float> acc_clip;   // 4, weak clips
};

ClipTargets make_targets(const TrainingClip& clip, const TaxonomyMap& map, std::size_t frames, double hop_seconds);

struct Batch {
  std::vector<std::shared_ptr<const LogMel>> features;
  std::vector<ClipTargets> targets;
  std::size_t frames = 0;
};

struct LossBreakdown {
  double l_sed_strong = 0.0;
  double l_sed_weak = 0.0;
  double L_SED = 0.0;
  double l_acc_strong = 0.0;
  double l_acc_weak = 0.0;
  double L_ACC = 0.0;
  double L_MTL = 0.0;
};

/// Mean binary cross-entropy over entries with mask != 0 (probabilities clamped
/// to [1e-7, 1-1e-7]); 0 when nothing is masked in.
double bce(std::span<const float> p, std::span<const float> t, std::span<const std::uint8_t> mask);

/// Fills l_sed_strong, l_sed_weak and L_SED.
void sed_loss(std::span<const Posteriors> post, const Batch& b, LossBreakdown& out);
/// Fills l_acc_strong, l_acc_weak and L_ACC.
void acc_loss(std::span<const Posteriors> post, const Batch& b, LossBreakdown& out);
double combine_losses(double l_sed, double l_acc, double alpha);

/// max_lr * exp(-5 (1 - min(epoch / ramp_epochs, 1))^2).
double lr_schedule(std::size_t epoch, double max_lr, std::size_t ramp_epochs);

class Adam {
 public:
  explicit Adam(std::vector<nn::Parameter<float>*> params, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);
  void step(double lr);
  std::uint64_t steps() const { return t_; }

 private:
  std::vector<nn::Parameter<float>*> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

struct StepLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  /// Step losses averaged over the epoch. In Stage 1 only l_sed_weak (clip BCE)
  /// and L_SED / L_MTL are populated.
  LossBreakdown loss;
};

struct TrainResult {
  Model model;
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Audio tagging: clip BCE on strong (collapsed to presence) and weak clips.
TrainResult train_stage1(const TrainConfig& cfg, const ModelConfig& tagger_config,
                         std::span<const TrainingClip> clips, const EpochCallback& on_epoch = {});

struct UnlabeledClip {
  std::string clip_id;
  std::shared_ptr<const LogMel> features;
};

/// Classes with clip probability >= threshold become pseudo-weak tags; clips
/// without any such class are dropped.
DatasetManifest pseudo_label(const Model& tagger, std::span<const UnlabeledClip> clips, double threshold);

/// Joint training on strong, weak and pseudo-weak clips minimising
/// alpha * L_SED + (1 - alpha) * L_ACC.
TrainResult train_stage2(const TrainConfig& cfg, const ModelConfig& model_config,
                         std::span<const TrainingClip> clips, const EpochCallback& on_epoch = {});

/// Mean clip-level BCE of the SED head over the clips (inference mode).
double clip_bce(const Model& m, std::span<const TrainingClip> clips);

std::string format_epoch_csv(const std::vector<EpochLog>& epochs);

}  // namespace mtlsed
