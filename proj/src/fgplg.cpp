#include "vsod/fgplg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vsod::fgplg {

FlowMethod parse_flow_method(const std::string& s) {
  if (s == "oracle") return FlowMethod::oracle;
  if (s == "block_matching") return FlowMethod::block_matching;
  throw Error("unknown flow method '" + s + "' (expected oracle or block_matching)");
}

std::string to_string(FlowMethod m) { return m == FlowMethod::oracle ? "oracle" : "block_matching"; }

void validate_flow(const Tensor& flow, int height, int width) {
  require(flow.shape() == Shape{2, height, width},
          "flow must be " + shape_str({2, height, width}) + ", got " + shape_str(flow.shape()));
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (std::size_t i = 0; i < plane; ++i) {
    require(std::isfinite(flow[i]) && std::isfinite(flow[plane + i]), "flow has non-finite values");
    require(std::abs(flow[i]) <= width && std::abs(flow[plane + i]) <= height,
            "flow exceeds the frame size");
  }
}

Tensor block_matching_flow(const Tensor& source, const Tensor& target, const BlockMatchingOptions& opts) {
  require(source.shape() == target.shape() && source.rank() == 3,
          "block matching needs equal [C,H,W] frames, got " + shape_str(source.shape()) + " and " +
              shape_str(target.shape()));
  require(opts.search_radius >= 0 && opts.patch_radius >= 0, "block matching radii must be non-negative");
  const int C = source.dim(0), H = source.dim(1), W = source.dim(2);
  const int R = opts.search_radius, P = opts.patch_radius;

  std::vector<std::pair<int, int>> candidates;
  for (int dy = -R; dy <= R; ++dy)
    for (int dx = -R; dx <= R; ++dx) candidates.emplace_back(dx, dy);
  std::stable_sort(candidates.begin(), candidates.end(), [](auto a, auto b) {
    return a.first * a.first + a.second * a.second < b.first * b.first + b.second * b.second;
  });

  std::vector<double> best(static_cast<std::size_t>(H) * W, std::numeric_limits<double>::infinity());
  Tensor flow({2, H, W});
  std::vector<double> cost(static_cast<std::size_t>(H) * W), integral(static_cast<std::size_t>(H + 1) * (W + 1));
  for (auto [dx, dy] : candidates) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int sy = std::clamp(y + dy, 0, H - 1), sx = std::clamp(x + dx, 0, W - 1);
        double c = 0;
        for (int ch = 0; ch < C; ++ch) {
          const double d = target.at(ch, y, x) - source.at(ch, sy, sx);
          c += d * d;
        }
        cost[y * W + x] = c;
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        integral[(y + 1) * (W + 1) + x + 1] = cost[y * W + x] + integral[y * (W + 1) + x + 1] +
                                              integral[(y + 1) * (W + 1) + x] - integral[y * (W + 1) + x];
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int y0 = std::max(0, y - P), y1 = std::min(H, y + P + 1);
        const int x0 = std::max(0, x - P), x1 = std::min(W, x + P + 1);
        const double c = integral[y1 * (W + 1) + x1] - integral[y0 * (W + 1) + x1] -
                         integral[y1 * (W + 1) + x0] + integral[y0 * (W + 1) + x0];
        // Relative slack absorbs integral-image rounding so exact ties stay ties.
        const double b = best[y * W + x];
        if (std::isinf(b) || c < b - 1e-9 * (1 + b)) {
          best[y * W + x] = c;
          flow.at(0, y, x) = dx;
          flow.at(1, y, x) = dy;
        }
      }
  }
  return flow;
}

Tensor estimate_flow(const Tensor& source, const Tensor& target, FlowMethod method,
                     const data::SceneTrack* track, int source_index, int target_index,
                     const BlockMatchingOptions& opts) {
  require(source.shape() == target.shape(), "estimate_flow: frames differ in size");
  if (method == FlowMethod::block_matching) return block_matching_flow(source, target, opts);
  require(track != nullptr, "oracle flow requested for a video without a synthetic track");
  require(track->height == source.dim(1) && track->width == source.dim(2),
          "oracle flow: track size does not match the frames");
  return track->flow(source_index, target_index);
}

Var warp_mask(const Var& mask, const Tensor& flow) {
  require(mask.value().rank() == 3 && mask.value().dim(0) == 1,
          "warp_mask expects a [1,H,W] map, got " + shape_str(mask.shape()));
  validate_flow(flow, mask.value().dim(1), mask.value().dim(2));
  return nn::warp_bilinear(mask, flow);
}

Tensor flow_magnitude(const Tensor& flow) {
  require(flow.rank() == 3 && flow.dim(0) == 2, "flow must be [2,H,W], got " + shape_str(flow.shape()));
  const int H = flow.dim(1), W = flow.dim(2);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  const double sx = W > 1 ? W - 1 : 1, sy = H > 1 ? H - 1 : 1;
  Tensor out({1, H, W});
  for (std::size_t i = 0; i < plane; ++i) {
    const double u = std::clamp(flow[i] / sx, -1.0, 1.0);
    const double v = std::clamp(flow[plane + i] / sy, -1.0, 1.0);
    out[i] = std::sqrt(u * u + v * v);
  }
  return out;
}

Tensor assemble_input(const Tensor& frame_k, const Tensor& wg_i, const Tensor& wg_j,
                      const Tensor& mag_i, const Tensor& mag_j) {
  require(frame_k.rank() == 3 && frame_k.dim(0) == 3, "frame must be [3,H,W], got " + shape_str(frame_k.shape()));
  const Shape plane{1, frame_k.dim(1), frame_k.dim(2)};
  for (const Tensor* t : {&wg_i, &wg_j, &mag_i, &mag_j})
    require(t->shape() == plane, "auxiliary plane " + shape_str(t->shape()) + " does not match frame " +
                                     shape_str(frame_k.shape()));
  Tensor out({kInputChannels, frame_k.dim(1), frame_k.dim(2)});
  const std::size_t n = wg_i.size();
  std::copy_n(frame_k.data(), 3 * n, out.data());
  std::copy_n(wg_i.data(), n, out.data() + 3 * n);
  std::copy_n(wg_j.data(), n, out.data() + 4 * n);
  std::copy_n(mag_i.data(), n, out.data() + 5 * n);
  std::copy_n(mag_j.data(), n, out.data() + 6 * n);
  return out;
}

Tensor build_input(const Tensor& frame_k, const Tensor& gt_i, const Tensor& gt_j,
                   const Tensor& flow_i, const Tensor& flow_j) {
  nn::NoGradGuard guard;
  return assemble_input(frame_k, warp_mask(Var(gt_i), flow_i).value(), warp_mask(Var(gt_j), flow_j).value(),
                        flow_magnitude(flow_i), flow_magnitude(flow_j));
}

model::RcrNetConfig generator_config(model::RcrNetConfig base) {
  base.backbone.in_channels = kInputChannels;
  return base;
}

ParamRegistry extend_input_channels(const ParamRegistry& pretrained, int in_channels) {
  ParamRegistry out = pretrained.clone();
  for (const auto& name : model::input_layer_params()) {
    const Tensor& w = pretrained.get(name).value();
    require(w.rank() == 4, name + " is not a conv kernel");
    const int O = w.dim(0), C = w.dim(1), k = w.dim(2) * w.dim(3);
    require(in_channels >= C, "cannot shrink " + name + " from " + std::to_string(C) + " inputs");
    Tensor wide({O, in_channels, w.dim(2), w.dim(3)});
    for (int o = 0; o < O; ++o)
      std::copy_n(w.data() + static_cast<std::size_t>(o) * C * k, C * k,
                  wide.data() + static_cast<std::size_t>(o) * in_channels * k);
    out.get(name).mutable_value() = std::move(wide);
  }
  return out;
}

std::vector<Triplet> sample_triplets(const std::vector<int>& annotated, int l) {
  require(l >= 1, "interval must be positive");
  for (std::size_t n = 1; n < annotated.size(); ++n)
    require(annotated[n] - annotated[n - 1] == l,
            "annotated index " + std::to_string(annotated[n]) + " is not spaced by " + std::to_string(l) +
                " from " + std::to_string(annotated[n - 1]));
  std::vector<Triplet> out;
  for (std::size_t n = 1; n + 1 < annotated.size(); ++n)
    out.push_back({annotated[n - 1], annotated[n], annotated[n + 1]});
  return out;
}

Var pseudo_label_logits(const model::RcrNet& net, const ParamRegistry& params, const Tensor& input) {
  require(net.config().backbone.in_channels == kInputChannels, "generator network must take 7 input planes");
  return net.forward_logits(params, Var(input));
}

Tensor generate_pseudo_label(const model::RcrNet& net, const ParamRegistry& params, const Triplet& t,
                             const Tensor& frame_k, const Tensor& gt_i, const Tensor& gt_j,
                             const Tensor& flow_i, const Tensor& flow_j) {
  require(t.i < t.k && t.k < t.j,
          "pseudo-label triplet must satisfy i < k < j, got (" + std::to_string(t.i) + "," +
              std::to_string(t.k) + "," + std::to_string(t.j) + ")");
  require(!gt_i.empty() && !gt_j.empty(), "pseudo-label generation needs ground truth at i and j");
  nn::NoGradGuard guard;
  return nn::sigmoid(pseudo_label_logits(net, params, build_input(frame_k, gt_i, gt_j, flow_i, flow_j))).value();
}

Tensor generate_pseudo_label_one_sided(const model::RcrNet& net, const ParamRegistry& params, int i, int k,
                                       const Tensor& frame_k, const Tensor& gt_i, const Tensor& flow_i) {
  require(i < k, "one-sided pseudo-label needs i < k");
  require(!gt_i.empty(), "pseudo-label generation needs ground truth at i");
  nn::NoGradGuard guard;
  return nn::sigmoid(pseudo_label_logits(net, params, build_input(frame_k, gt_i, gt_i, flow_i, flow_i))).value();
}

void AnnotationSchedule::validate() const {
  require(interval >= 1, "annotation interval must be positive");
  require(per_interval >= 0 && per_interval <= interval - 1,
          "pseudo-labels per interval must lie in [0, " + std::to_string(interval - 1) + "], got " +
              std::to_string(per_interval));
}

std::vector<PlanEntry> build_pseudo_schedule(int num_frames, const AnnotationSchedule& schedule) {
  schedule.validate();
  require(num_frames >= 1, "schedule needs at least one frame");
  const int l = schedule.interval, m = schedule.per_interval;
  std::vector<PlanEntry> plan(num_frames);
  for (int a = 0; a < num_frames; a += l) plan[a].kind = data::LabelKind::gt;
  for (int a = 0; a < num_frames; a += l) {
    const int right = a + l < num_frames ? a + l : a;
    for (int t = 1; t <= m; ++t) {
      // round half down of t*l/(m+1)
      const int offset = (2 * t * l + m) / (2 * (m + 1));
      const int k = a + offset;
      if (k >= num_frames) continue;
      plan[k] = {data::LabelKind::pseudo, a, right};
    }
  }
  return plan;
}

std::vector<int> annotated_indices(const std::vector<PlanEntry>& plan) {
  std::vector<int> out;
  for (std::size_t i = 0; i < plan.size(); ++i)
    if (plan[i].kind == data::LabelKind::gt) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace vsod::fgplg
