#pragma once

#include <string>
#include <vector>

#include "vsod/data.hpp"
#include "vsod/rcrnet.hpp"

namespace vsod::fgplg {

using nn::ParamRegistry;
using nn::Var;

/// Input planes: RGB, warped G_i, warped G_j, |O_i|, |O_j|.
constexpr int kInputChannels = 7;

enum class FlowMethod { oracle, block_matching };
FlowMethod parse_flow_method(const std::string& s);
std::string to_string(FlowMethod m);

struct BlockMatchingOptions {
  int search_radius = 4;
  int patch_radius = 2;
};

/// Rejects flows that are not [2,H,W], non-finite, or beyond |u| <= W, |v| <= H.
void validate_flow(const Tensor& flow, int height, int width);

/// Integer target->source displacements minimizing the patch SSD (border-clamped
/// sampling). Ties go to the smaller displacement.
Tensor block_matching_flow(const Tensor& source, const Tensor& target,
                           const BlockMatchingOptions& opts = {});

/// Target->source flow. The oracle needs the scene track and frame indices.
Tensor estimate_flow(const Tensor& source, const Tensor& target, FlowMethod method,
                     const data::SceneTrack* track = nullptr, int source_index = -1,
                     int target_index = -1, const BlockMatchingOptions& opts = {});

/// Backward warp of a [1,H,W] map; differentiable in the map.
Var warp_mask(const Var& mask, const Tensor& flow);

/// sqrt(clamp(u/(W-1))^2 + clamp(v/(H-1))^2), clamps to [-1,1].
Tensor flow_magnitude(const Tensor& flow);

Tensor assemble_input(const Tensor& frame_k, const Tensor& wg_i, const Tensor& wg_j,
                      const Tensor& mag_i, const Tensor& mag_j);

/// Warps both ground truths into frame k and packs the 7-plane input.
/// flow_i / flow_j map frame k back to frames i / j.
Tensor build_input(const Tensor& frame_k, const Tensor& gt_i, const Tensor& gt_j,
                   const Tensor& flow_i, const Tensor& flow_j);

/// Same network layout with a 7-plane first layer.
model::RcrNetConfig generator_config(model::RcrNetConfig base);

/// Copies pretrained RGB weights; the extra input slots of the first layer start at zero.
ParamRegistry extend_input_channels(const ParamRegistry& pretrained, int in_channels);

struct Triplet {
  int i;
  int k;
  int j;
  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// (k-l, k, k+l) for every annotated k whose neighbours at distance l are annotated.
std::vector<Triplet> sample_triplets(const std::vector<int>& annotated, int l);

/// Logits of the generator for an assembled input.
Var pseudo_label_logits(const model::RcrNet& net, const ParamRegistry& params, const Tensor& input);

/// PG_k for i < k < j.
Tensor generate_pseudo_label(const model::RcrNet& net, const ParamRegistry& params,
                             const Triplet& t, const Tensor& frame_k, const Tensor& gt_i,
                             const Tensor& gt_j, const Tensor& flow_i, const Tensor& flow_j);

/// Trailing frames after the last annotation: the left ground truth fills both slots.
Tensor generate_pseudo_label_one_sided(const model::RcrNet& net, const ParamRegistry& params,
                                       int i, int k, const Tensor& frame_k, const Tensor& gt_i,
                                       const Tensor& flow_i);

struct AnnotationSchedule {
  int interval = 5;
  int per_interval = 0;
  void validate() const;
};

struct PlanEntry {
  data::LabelKind kind = data::LabelKind::unlabeled;
  /// Annotated neighbours used to generate a pseudo-label; right == left at the tail.
  int left = -1;
  int right = -1;
};

/// GT at multiples of l; m pseudo-labels per interval at offsets round-half-down(t*l/(m+1)).
std::vector<PlanEntry> build_pseudo_schedule(int num_frames, const AnnotationSchedule& schedule);

std::vector<int> annotated_indices(const std::vector<PlanEntry>& plan);

}  // namespace vsod::fgplg
