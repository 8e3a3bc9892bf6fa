#include "vsod/pipeline.hpp"

#include <algorithm>

namespace vsod::pipeline {

Tensor resize_image(const Tensor& image, int height, int width) {
  if (image.dim(1) == height && image.dim(2) == width) return image;
  nn::NoGradGuard guard;
  Tensor out = nn::bilinear_resize(nn::Var(image), height, width).value();
  for (auto& v : out.values()) v = std::clamp<Scalar>(v, 0, 1);
  return out;
}

Tensor resize_mask(const Tensor& mask, int height, int width) {
  if (mask.dim(1) == height && mask.dim(2) == width) return mask;
  Tensor out = resize_image(mask, height, width);
  for (auto& v : out.values()) v = v >= 0.5 ? 1 : 0;
  return out;
}

std::vector<Tensor> load_frames(const data::Video& video, int height, int width) {
  std::vector<Tensor> out;
  for (int i = 0; i < video.num_frames(); ++i) out.push_back(resize_image(video.load_frame(i), height, width));
  return out;
}

std::vector<Tensor> sparse_gt(const data::Video& video, int interval, int height, int width) {
  require(interval >= 1, "annotation interval must be positive");
  std::vector<Tensor> out(video.num_frames());
  for (int i = 0; i < video.num_frames(); i += interval) out[i] = resize_mask(video.load_mask(i), height, width);
  return out;
}

std::vector<Tensor> all_masks(const data::Video& video, int height, int width) {
  std::vector<Tensor> out(video.num_frames());
  for (int i = 0; i < video.num_frames(); ++i)
    if (video.has_mask(i)) out[i] = resize_mask(video.load_mask(i), height, width);
  return out;
}

std::vector<train::LabeledImage> labeled_stills(const std::vector<Tensor>& frames,
                                                const std::vector<Tensor>& labels) {
  require(frames.size() == labels.size(), "frame and label counts differ");
  std::vector<train::LabeledImage> out;
  for (std::size_t i = 0; i < frames.size(); ++i)
    if (!labels[i].empty()) out.push_back({frames[i], labels[i]});
  return out;
}

Tensor video_flow(const data::Video& video, const std::vector<Tensor>& frames, int i, int k,
                  const FlowSettings& flow) {
  const data::SceneTrack* track = video.track() ? &*video.track() : nullptr;
  if (flow.method == fgplg::FlowMethod::oracle)
    require(track != nullptr, "oracle flow requested for " + video.name() + ", which has no synthetic track");
  return fgplg::estimate_flow(frames.at(i), frames.at(k), flow.method, track, i, k, flow.block);
}

std::vector<train::LabeledImage> generator_samples(const data::Video& video, const std::vector<Tensor>& frames,
                                                   const std::vector<Tensor>& gt, int interval,
                                                   const FlowSettings& flow) {
  std::vector<int> annotated;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (!gt[i].empty()) annotated.push_back(static_cast<int>(i));
  std::vector<train::LabeledImage> out;
  for (const auto& t : fgplg::sample_triplets(annotated, interval)) {
    const Tensor input = fgplg::build_input(frames[t.k], gt[t.i], gt[t.j], video_flow(video, frames, t.i, t.k, flow),
                                            video_flow(video, frames, t.j, t.k, flow));
    out.push_back({input, gt[t.k]});
  }
  return out;
}

std::vector<Tensor> generate_pseudo_labels(const data::Video& video, const std::vector<Tensor>& frames,
                                           const std::vector<Tensor>& gt,
                                           const std::vector<fgplg::PlanEntry>& plan,
                                           const model::RcrNet& generator, const nn::ParamRegistry& params,
                                           const FlowSettings& flow) {
  require(plan.size() == frames.size() && gt.size() == frames.size(),
          video.name() + ": plan, frames and labels differ in length");
  std::vector<Tensor> out(frames.size());
  for (std::size_t k = 0; k < plan.size(); ++k) {
    const auto& e = plan[k];
    if (e.kind != data::LabelKind::pseudo) continue;
    const int kk = static_cast<int>(k);
    require(!gt[e.left].empty(), "missing ground truth " + video.mask_path(e.left).string());
    const Tensor flow_i = video_flow(video, frames, e.left, kk, flow);
    if (e.right == e.left) {
      out[k] = fgplg::generate_pseudo_label_one_sided(generator, params, e.left, kk, frames[k], gt[e.left], flow_i);
    } else {
      require(!gt[e.right].empty(), "missing ground truth " + video.mask_path(e.right).string());
      out[k] = fgplg::generate_pseudo_label(generator, params, {e.left, kk, e.right}, frames[k], gt[e.left],
                                            gt[e.right], flow_i, video_flow(video, frames, e.right, kk, flow));
    }
  }
  return out;
}

void write_plan(const fs::path& dir, const data::Video& video, const std::vector<fgplg::PlanEntry>& plan,
                const std::vector<Tensor>& pseudo) {
  require(static_cast<int>(plan.size()) == video.num_frames(), video.name() + ": plan length mismatch");
  fs::create_directories(dir);
  std::vector<data::ManifestEntry> entries;
  for (int i = 0; i < video.num_frames(); ++i) {
    data::ManifestEntry e{i, plan[i].kind, ""};
    if (e.kind == data::LabelKind::gt) {
      require(video.has_mask(i), "plan references missing mask " + video.mask_path(i).string());
      e.path = fs::relative(video.mask_path(i), dir).generic_string();
    } else if (e.kind == data::LabelKind::pseudo) {
      require(!pseudo.at(i).empty(), video.name() + ": no pseudo-label generated for frame " + std::to_string(i));
      e.path = video.frame_name(i) + ".png";
      data::write_gray(dir / e.path, pseudo[i]);
    }
    entries.push_back(e);
  }
  // Manifest last, after every listed file exists.
  data::write_manifest(dir / "manifest.txt", entries);
}

PlanLabels read_plan(const fs::path& manifest, int num_frames, int height, int width) {
  const auto entries = data::read_manifest(manifest);
  PlanLabels out{std::vector<Tensor>(num_frames), std::vector<data::LabelKind>(num_frames, data::LabelKind::unlabeled)};
  const fs::path dir = manifest.parent_path();
  for (const auto& e : entries) {
    require(e.index >= 0 && e.index < num_frames,
            manifest.string() + ": frame index " + std::to_string(e.index) + " out of range");
    out.kinds[e.index] = e.kind;
    if (e.kind == data::LabelKind::gt)
      out.labels[e.index] = resize_mask(data::read_mask(dir / e.path), height, width);
    else if (e.kind == data::LabelKind::pseudo)
      out.labels[e.index] = resize_image(data::read_gray(dir / e.path), height, width);
  }
  return out;
}

std::vector<Tensor> predict_video(const model::VideoModel& model, const nn::ParamRegistry& params,
                                  const std::vector<Tensor>& frames, int clip_length) {
  nn::NoGradGuard guard;
  std::vector<Tensor> out(frames.size());
  for (auto [s, n] : train::clip_windows(static_cast<int>(frames.size()), clip_length)) {
    const std::vector<nn::Var> clip(frames.begin() + s, frames.begin() + s + n);
    const auto maps = model.video_forward(params, clip);
    for (int t = 0; t < n; ++t)
      if (out[s + t].empty()) out[s + t] = maps[t].value();
  }
  return out;
}

}  // namespace vsod::pipeline
