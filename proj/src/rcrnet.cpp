#include "vsod/rcrnet.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vsod::model {

namespace {

using nn::ConvOptions;

std::string stage_prefix(int stage, int block) {
  return "backbone.stage" + std::to_string(stage + 1) + ".block" + std::to_string(block);
}

Var conv(const ParamRegistry& p, const std::string& name, const Var& x, ConvOptions opts = {}) {
  const std::string bias = name + ".bias";
  return nn::conv2d(x, p.get(name + ".weight"), p.contains(bias) ? p.get(bias) : Var(), opts);
}

void add_conv(ParamRegistry& p, const std::string& name, int out, int in, int k, bool bias,
              Rng& rng) {
  p.add(name + ".weight", nn::he_uniform({out, in, k, k}, rng));
  if (bias) p.add(name + ".bias", Tensor({out}));
}

int stage_stride(int stage) { return stage < 4 ? 2 : 1; }

Var residual_block(const ParamRegistry& p, const std::string& prefix, const Var& x, int stride,
                   int dilation) {
  Var h = nn::relu(conv(p, prefix + ".conv1", x, {stride, dilation, nn::kSamePadding}));
  h = conv(p, prefix + ".conv2", h, {1, dilation, nn::kSamePadding});
  Var shortcut = p.contains(prefix + ".shortcut.weight")
                     ? conv(p, prefix + ".shortcut", x, {stride, 1, 0})
                     : x;
  return nn::relu(nn::add(h, shortcut));
}

}  // namespace

void BackboneConfig::validate() const {
  require(in_channels >= 1, "backbone: in_channels must be positive");
  for (int c : stage_channels) require(c >= 1, "backbone: stage channels must be positive");
  for (int b : stage_blocks) require(b >= 1, "backbone: stage blocks must be positive");
  require(output_stride == 16, "backbone: output stride must be exactly 16, got " +
                                   std::to_string(output_stride));
  require(final_stage_dilation >= 1, "backbone: final stage dilation must be >= 1");
  require(!aspp_rates.empty(), "backbone: ASPP needs at least one rate");
  std::set<int> distinct(aspp_rates.begin(), aspp_rates.end());
  require(distinct.size() == aspp_rates.size() && *distinct.begin() >= 1,
          "backbone: ASPP rates must be distinct and >= 1");
  require(aspp_out_channels >= 1, "backbone: ASPP output channels must be positive");
}

BackboneConfig BackboneConfig::full_scale() {
  BackboneConfig cfg;
  cfg.stage_channels = {64, 256, 512, 1024, 2048};
  cfg.aspp_out_channels = 256;
  return cfg;
}

void ClassifierConfig::validate(const BackboneConfig& backbone) const {
  require(num_refine_blocks == 3, "classifier: exactly three refinement blocks are supported");
  require(refine_channels >= 1, "classifier: refine_channels must be positive");
  for (int s = 0; s < 3; ++s)
    require(skip_out_channels >= 1 && skip_out_channels < backbone.stage_channels[s],
            "classifier: skip_out_channels " + std::to_string(skip_out_channels) +
                " must be below the tapped stage width " +
                std::to_string(backbone.stage_channels[s]));
}

ClassifierConfig ClassifierConfig::full_scale() { return {96, 128, 3}; }

void validate_frame(const Tensor& frame, int channels) {
  require(frame.rank() == 3 && frame.dim(0) == channels,
          "frame must be [" + std::to_string(channels) + ",H,W], got " + shape_str(frame.shape()));
  require(frame.dim(1) % 16 == 0 && frame.dim(2) % 16 == 0,
          "frame height and width must be multiples of 16, got " + shape_str(frame.shape()));
  // RGB planes must be normalized; auxiliary planes only finite.
  const std::size_t rgb = std::min<std::size_t>(3, channels) * frame.dim(1) * frame.dim(2);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const Scalar v = frame[i];
    if (i < rgb)
      require(v >= 0 && v <= 1, "frame values must lie in [0,1]");
    else
      require(std::isfinite(v), "frame values must be finite");
  }
}

void init_backbone(ParamRegistry& params, const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  int in = cfg.in_channels;
  for (int s = 0; s < 5; ++s) {
    const int out = cfg.stage_channels[s];
    for (int b = 0; b < cfg.stage_blocks[s]; ++b) {
      const std::string prefix = stage_prefix(s, b);
      const int block_in = b == 0 ? in : out;
      const int stride = b == 0 ? stage_stride(s) : 1;
      add_conv(params, prefix + ".conv1", out, block_in, 3, true, rng);
      add_conv(params, prefix + ".conv2", out, out, 3, true, rng);
      if (block_in != out || stride != 1)
        add_conv(params, prefix + ".shortcut", out, block_in, 1, false, rng);
    }
    in = out;
  }
  const int c = cfg.stage_channels[4];
  for (std::size_t i = 0; i < cfg.aspp_rates.size(); ++i) {
    const int k = cfg.aspp_rates[i] == 1 ? 1 : 3;
    add_conv(params, "aspp.branch" + std::to_string(i), cfg.aspp_out_channels, c, k, true, rng);
  }
  int concat = static_cast<int>(cfg.aspp_rates.size()) * cfg.aspp_out_channels;
  if (cfg.global_pool_branch) {
    add_conv(params, "aspp.pool", cfg.aspp_out_channels, c, 1, true, rng);
    concat += cfg.aspp_out_channels;
  }
  add_conv(params, "aspp.project", cfg.aspp_out_channels, concat, 1, true, rng);
}

void init_residual_skip(ParamRegistry& params, const std::string& prefix, int in_channels,
                        int out_channels, Rng& rng) {
  require(in_channels > out_channels,
          "residual skip must reduce channels: M=" + std::to_string(in_channels) +
              " N=" + std::to_string(out_channels));
  const int mid = std::max(1, in_channels / 4);
  add_conv(params, prefix + ".project", out_channels, in_channels, 1, false, rng);
  add_conv(params, prefix + ".bottleneck.reduce", mid, in_channels, 1, false, rng);
  add_conv(params, prefix + ".bottleneck.conv", mid, mid, 3, false, rng);
  params.add(prefix + ".bottleneck.expand.weight", Tensor({out_channels, mid, 1, 1}));
}

void init_classifier(ParamRegistry& params, const BackboneConfig& backbone,
                     const ClassifierConfig& cfg, Rng& rng) {
  cfg.validate(backbone);
  int bottom = backbone.aspp_out_channels;
  for (int i = 0; i < 3; ++i) {
    const int tap = 2 - i;  // deepest first: stage 3, 2, 1
    init_residual_skip(params, "classifier.skip" + std::to_string(i + 1),
                       backbone.stage_channels[tap], cfg.skip_out_channels, rng);
    add_conv(params, "classifier.refine" + std::to_string(i + 1), cfg.refine_channels,
             bottom + cfg.skip_out_channels, 3, true, rng);
    bottom = cfg.refine_channels;
  }
  add_conv(params, "classifier.head", 1, cfg.refine_channels, 1, true, rng);
}

SpatialFeatures extract_features(const Var& frame, const BackboneConfig& cfg,
                                 const ParamRegistry& params) {
  cfg.validate();
  validate_frame(frame.value(), cfg.in_channels);
  SpatialFeatures out;
  Var x = frame;
  for (int s = 0; s < 5; ++s) {
    const int dilation = s == 4 ? cfg.final_stage_dilation : 1;
    for (int b = 0; b < cfg.stage_blocks[s]; ++b)
      x = residual_block(params, stage_prefix(s, b), x, b == 0 ? stage_stride(s) : 1, dilation);
    if (s < 3) out.skips[2 - s] = x;
  }
  out.aspp = aspp(x, cfg, params);
  return out;
}

Var aspp(const Var& features, const BackboneConfig& cfg, const ParamRegistry& params) {
  const Tensor& f = features.value();
  require(f.rank() == 3 && f.dim(1) >= 1 && f.dim(2) >= 1,
          "aspp: expected [C,h,w], got " + shape_str(f.shape()));
  std::vector<Var> branches;
  for (std::size_t i = 0; i < cfg.aspp_rates.size(); ++i) {
    const int rate = cfg.aspp_rates[i];
    branches.push_back(nn::relu(conv(params, "aspp.branch" + std::to_string(i), features,
                                     {1, rate, nn::kSamePadding})));
  }
  if (cfg.global_pool_branch) {
    Var pooled = nn::relu(conv(params, "aspp.pool", nn::global_avg_pool(features)));
    branches.push_back(nn::broadcast_spatial(pooled, f.dim(1), f.dim(2)));
  }
  return nn::relu(conv(params, "aspp.project", nn::concat(branches)));
}

Var residual_skip(const Var& low_level, const ParamRegistry& params, const std::string& prefix) {
  const Shape& proj = params.get(prefix + ".project.weight").shape();
  require(proj[1] > proj[0], "residual skip must reduce channels: M=" + std::to_string(proj[1]) +
                                 " N=" + std::to_string(proj[0]));
  Var projected = conv(params, prefix + ".project", low_level);
  Var b = nn::relu(conv(params, prefix + ".bottleneck.reduce", low_level));
  b = nn::relu(conv(params, prefix + ".bottleneck.conv", b));
  b = conv(params, prefix + ".bottleneck.expand", b);
  return nn::add(projected, b);
}

Var refine_block(const Var& bottom_up, const Var& skip, const ParamRegistry& params,
                 const std::string& prefix) {
  const Shape& bs = bottom_up.shape();
  const Shape& ss = skip.shape();
  require(bs.size() == 3 && ss.size() == 3,
          "refine_block: expected [C,h,w] inputs, got " + shape_str(bs) + " and " + shape_str(ss));
  require(ss[1] % bs[1] == 0 && ss[2] % bs[2] == 0 && ss[1] / bs[1] == ss[2] / bs[2],
          "refine_block: skip " + shape_str(ss) + " is not an integer multiple of bottom-up " +
              shape_str(bs));
  Var up = (bs[1] == ss[1] && bs[2] == ss[2]) ? bottom_up
                                              : nn::bilinear_resize(bottom_up, ss[1], ss[2]);
  return nn::relu(conv(params, prefix, nn::concat({up, skip})));
}

Var segment_logits(const Var& aspp_out, const std::array<Var, 3>& skips, int out_h, int out_w,
                   const ClassifierConfig& cfg, const ParamRegistry& params) {
  require(cfg.num_refine_blocks == 3, "segment: exactly three refinement blocks are supported");
  for (int i = 1; i < 3; ++i) {
    const Shape& finer = skips[i].shape();
    const Shape& coarser = skips[i - 1].shape();
    require(finer.size() == 3 && coarser.size() == 3 && finer[1] == 2 * coarser[1] &&
                finer[2] == 2 * coarser[2],
            "segment: skips must be ordered deepest first with stride ratio 2, got " +
                shape_str(coarser) + " then " + shape_str(finer));
  }
  require(skips[0].shape()[1] == 2 * aspp_out.shape()[1] &&
              skips[0].shape()[2] == 2 * aspp_out.shape()[2],
          "segment: deepest skip " + shape_str(skips[0].shape()) +
              " must be twice the ASPP resolution " + shape_str(aspp_out.shape()));
  Var x = aspp_out;
  for (int i = 0; i < 3; ++i) {
    const std::string n = std::to_string(i + 1);
    Var s = residual_skip(skips[i], params, "classifier.skip" + n);
    x = refine_block(x, s, params, "classifier.refine" + n);
  }
  Var logits = conv(params, "classifier.head", x);
  return nn::bilinear_resize(logits, out_h, out_w);
}

Var segment(const Var& aspp_out, const std::array<Var, 3>& skips, int out_h, int out_w,
            const ClassifierConfig& cfg, const ParamRegistry& params) {
  return nn::sigmoid(segment_logits(aspp_out, skips, out_h, out_w, cfg, params));
}

std::vector<std::string> input_layer_params() {
  return {"backbone.stage1.block0.conv1.weight", "backbone.stage1.block0.shortcut.weight"};
}

RcrNet::RcrNet(RcrNetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.backbone.validate();
  cfg_.classifier.validate(cfg_.backbone);
}

ParamRegistry RcrNet::init_params(Rng& rng) const {
  ParamRegistry params;
  init_backbone(params, cfg_.backbone, rng);
  init_classifier(params, cfg_.backbone, cfg_.classifier, rng);
  return params;
}

SpatialFeatures RcrNet::features(const ParamRegistry& params, const Var& frame) const {
  return extract_features(frame, cfg_.backbone, params);
}

Var RcrNet::decode_logits(const ParamRegistry& params, const SpatialFeatures& feats, int out_h,
                          int out_w) const {
  return segment_logits(feats.aspp, feats.skips, out_h, out_w, cfg_.classifier, params);
}

Var RcrNet::forward_logits(const ParamRegistry& params, const Var& frame) const {
  const SpatialFeatures f = features(params, frame);
  return decode_logits(params, f, frame.shape()[1], frame.shape()[2]);
}

Var RcrNet::forward_single(const ParamRegistry& params, const Var& frame) const {
  return nn::sigmoid(forward_logits(params, frame));
}

}  // namespace vsod::model
