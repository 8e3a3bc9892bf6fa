#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vsod/config.hpp"
#include "vsod/fgplg.hpp"
#include "vsod/ner.hpp"

namespace vsod::train {

using nn::ParamRegistry;
using nn::Var;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int clip_length = 4;
  int height = 64;
  int width = 64;
  double lr_pretrain = 1e-4;
  double lr_finetune = 1e-5;
  int pretrain_steps = 1000;
  int fgplg_steps = 500;
  int video_steps = 500;
  std::uint64_t seed = 0;
  fgplg::AnnotationSchedule schedule{5, 1};
  AdamConfig adam;
  model::VideoModelConfig model;

  void validate() const;
  /// Reads "train.*" and "model.*" keys over the defaults.
  static TrainConfig from_config(const Config& cfg);
  /// Canonical key/value form; used for the checkpoint digest.
  Config to_config() const;
};

/// Mean stable sigmoid cross-entropy; soft targets allowed.
Var bce_loss(const Var& logits, const Tensor& target);

class Adam {
 public:
  Adam(double lr, AdamConfig cfg = {});

  /// One bias-corrected update of every parameter that has a gradient. A non-finite
  /// gradient aborts the step before anything changes.
  void step(ParamRegistry& params);
  long steps() const { return t_; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  double lr_;
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::string kind;  // rcrnet | fgplg | video
  std::string config_text;
  std::string config_digest;
  ParamRegistry params;
  std::int64_t step = 0;
  std::string rng_state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct LossRecord {
  long step;
  std::string stage;
  double loss;
};

/// "step,stage,loss" CSV.
std::string loss_csv(const std::vector<LossRecord>& records);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> losses;
};

struct LabeledImage {
  Tensor frame;  // [C,H,W]
  Tensor mask;   // [1,H,W] in [0,1]
};

/// Image pretraining of the spatial network at lr_pretrain. Starts from `init` when
/// given, otherwise from a seeded random init.
TrainResult pretrain_rcrnet(const std::vector<LabeledImage>& stills, const TrainConfig& cfg,
                            const ParamRegistry* init = nullptr);

/// Fine-tunes the 7-plane generator on assembled triplet inputs (frame = assembled input,
/// mask = ground truth at the triplet centre), starting from the widened RGB weights.
TrainResult train_fgplg(const std::vector<LabeledImage>& samples, const TrainConfig& cfg,
                        const ParamRegistry& pretrained_rgb);

struct VideoSample {
  std::string name;
  std::vector<Tensor> frames;
  /// GT or pseudo-label per frame; empty tensor for unlabeled frames.
  std::vector<Tensor> labels;
  /// Provenance of each label; the loss does not look at it.
  std::vector<data::LabelKind> kinds;
};

/// Clip windows of length T with stride T; the last window is shifted to end at the
/// final frame. Videos shorter than T give one window over the whole video.
std::vector<std::pair<int, int>> clip_windows(int num_frames, int clip_length);

/// Sum of per-frame BCE over labeled frames of a clip; unlabeled frames only feed
/// temporal context. Returns an undefined Var when nothing in the clip is labeled.
Var clip_loss(const model::VideoModel& model, const ParamRegistry& params,
              const std::vector<Tensor>& frames, const std::vector<Tensor>& labels);

/// Joint RCRNet+NER training at lr_finetune, from pretrained spatial weights and a
/// seeded NER init.
TrainResult train_video_model(const std::vector<VideoSample>& videos, const TrainConfig& cfg,
                              const ParamRegistry& pretrained_rgb);

}  // namespace vsod::train
