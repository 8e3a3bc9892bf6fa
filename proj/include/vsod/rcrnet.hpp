#pragma once

#include <array>
#include <string>
#include <vector>

#include "vsod/ops.hpp"
#include "vsod/params.hpp"

namespace vsod::model {

using nn::ParamRegistry;
using nn::Rng;
using nn::Var;

/// Five-stage residual extractor with output stride 16 plus ASPP head.
struct BackboneConfig {
  int in_channels = 3;
  std::array<int, 5> stage_channels{8, 16, 32, 64, 64};
  std::array<int, 5> stage_blocks{1, 1, 1, 1, 1};
  int final_stage_dilation = 2;
  int output_stride = 16;
  std::vector<int> aspp_rates{1, 6, 12, 18};
  int aspp_out_channels = 64;
  bool global_pool_branch = true;

  void validate() const;
  /// ResNet-50 stage widths and a 256-channel ASPP.
  static BackboneConfig full_scale();
};

struct ClassifierConfig {
  int skip_out_channels = 6;
  int refine_channels = 32;
  int num_refine_blocks = 3;

  void validate(const BackboneConfig& backbone) const;
  static ClassifierConfig full_scale();
};

struct RcrNetConfig {
  BackboneConfig backbone;
  ClassifierConfig classifier;
};

/// Extractor output: ASPP features at stride 16 and skip taps, deepest first
/// (strides 8, 4, 2).
struct SpatialFeatures {
  Var aspp;
  std::array<Var, 3> skips;
};

/// Checks [channels,H,W], H and W multiples of 16, values in [0,1].
void validate_frame(const Tensor& frame, int channels);

void init_backbone(ParamRegistry& params, const BackboneConfig& cfg, Rng& rng);
void init_classifier(ParamRegistry& params, const BackboneConfig& backbone,
                     const ClassifierConfig& cfg, Rng& rng);
/// Projection M->N (no bias) plus a bottleneck branch whose last 1x1 layer is zero.
void init_residual_skip(ParamRegistry& params, const std::string& prefix, int in_channels,
                        int out_channels, Rng& rng);

SpatialFeatures extract_features(const Var& frame, const BackboneConfig& cfg,
                                 const ParamRegistry& params);
Var aspp(const Var& features, const BackboneConfig& cfg, const ParamRegistry& params);
Var residual_skip(const Var& low_level, const ParamRegistry& params, const std::string& prefix);
Var refine_block(const Var& bottom_up, const Var& skip, const ParamRegistry& params,
                 const std::string& prefix);
/// Three refinement stages, 1x1 classifier, bilinear upsample to (out_h, out_w). Logits.
Var segment_logits(const Var& aspp_out, const std::array<Var, 3>& skips, int out_h, int out_w,
                   const ClassifierConfig& cfg, const ParamRegistry& params);
Var segment(const Var& aspp_out, const std::array<Var, 3>& skips, int out_h, int out_w,
            const ClassifierConfig& cfg, const ParamRegistry& params);

/// Parameter name of the kernels that read the raw input channels.
std::vector<std::string> input_layer_params();

class RcrNet {
 public:
  explicit RcrNet(RcrNetConfig cfg);

  const RcrNetConfig& config() const noexcept { return cfg_; }
  ParamRegistry init_params(Rng& rng) const;

  SpatialFeatures features(const ParamRegistry& params, const Var& frame) const;
  Var decode_logits(const ParamRegistry& params, const SpatialFeatures& feats, int out_h,
                    int out_w) const;
  Var forward_logits(const ParamRegistry& params, const Var& frame) const;
  /// S = N_seg(N_feat(I)); per-pixel saliency in [0,1].
  Var forward_single(const ParamRegistry& params, const Var& frame) const;

 private:
  RcrNetConfig cfg_;
};

}  // namespace vsod::model
