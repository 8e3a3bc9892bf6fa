#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vsod/data.hpp"
#include "vsod/fgplg.hpp"
#include "vsod/trainer.hpp"

namespace vsod::pipeline {

namespace fs = std::filesystem;

/// Bilinear resize of a [C,H,W] image; identity when the size already matches.
Tensor resize_image(const Tensor& image, int height, int width);
/// Resize followed by re-binarization at 0.5.
Tensor resize_mask(const Tensor& mask, int height, int width);

std::vector<Tensor> load_frames(const data::Video& video, int height, int width);

/// Ground truth at every multiple of `interval` (must exist on disk), empty elsewhere.
std::vector<Tensor> sparse_gt(const data::Video& video, int interval, int height, int width);

/// All masks on disk, for evaluation; frames without masks are empty.
std::vector<Tensor> all_masks(const data::Video& video, int height, int width);

std::vector<train::LabeledImage> labeled_stills(const std::vector<Tensor>& frames,
                                                const std::vector<Tensor>& labels);

struct FlowSettings {
  fgplg::FlowMethod method = fgplg::FlowMethod::oracle;
  fgplg::BlockMatchingOptions block;
};

/// Target->source flow from frame k back to frame i of a video.
Tensor video_flow(const data::Video& video, const std::vector<Tensor>& frames, int i, int k,
                  const FlowSettings& flow);

/// Generator training samples for annotated-centre triplets (k-l, k, k+l).
std::vector<train::LabeledImage> generator_samples(const data::Video& video,
                                                   const std::vector<Tensor>& frames,
                                                   const std::vector<Tensor>& gt, int interval,
                                                   const FlowSettings& flow);

/// Pseudo-labels for every pseudo entry of the plan (empty tensors elsewhere).
std::vector<Tensor> generate_pseudo_labels(const data::Video& video, const std::vector<Tensor>& frames,
                                           const std::vector<Tensor>& gt,
                                           const std::vector<fgplg::PlanEntry>& plan,
                                           const model::RcrNet& generator, const nn::ParamRegistry& params,
                                           const FlowSettings& flow);

/// Writes `<dir>/<stem>.png` for each pseudo map and `<dir>/manifest.txt`.
void write_plan(const fs::path& dir, const data::Video& video, const std::vector<fgplg::PlanEntry>& plan,
                const std::vector<Tensor>& pseudo);

/// Labels listed by a manifest (GT binarized, pseudo kept soft), empty for unlabeled.
struct PlanLabels {
  std::vector<Tensor> labels;
  std::vector<data::LabelKind> kinds;
};
PlanLabels read_plan(const fs::path& manifest, int num_frames, int height, int width);

/// Saliency for every frame, inferred in clip windows of length T.
std::vector<Tensor> predict_video(const model::VideoModel& model, const nn::ParamRegistry& params,
                                  const std::vector<Tensor>& frames, int clip_length);

}  // namespace vsod::pipeline
