#include "vsod/ner.hpp"

#include <algorithm>

namespace vsod::model {

namespace {

Var conv3(const ParamRegistry& p, const std::string& name, const Var& x) {
  const std::string bias = name + ".bias";
  return nn::conv2d(x, p.get(name + ".weight"), p.contains(bias) ? p.get(bias) : Var());
}

Var conv1(const ParamRegistry& p, const std::string& name, const Var& x) {
  return nn::conv2d(x, p.get(name + ".weight"), p.get(name + ".bias"));
}

const char* const kGruKernels[] = {"xz", "hz", "xr", "hr", "xh", "hh"};

}  // namespace

NerConfig NerConfig::variant(char name) {
  NerConfig cfg;
  switch (name) {
    case 'a':
      cfg.enable_first_nonlocal = cfg.enable_dbconvgru = cfg.enable_second_nonlocal = false;
      break;
    case 'b':
      cfg.enable_dbconvgru = cfg.enable_second_nonlocal = false;
      break;
    case 'c':
      cfg.enable_second_nonlocal = false;
      break;
    case 'd':
      cfg.bidirectional_depth = Depth::single;
      break;
    case 'e':
      break;
    default:
      throw Error(std::string("unknown NER variant: ") + name);
  }
  return cfg;
}

void init_nonlocal(ParamRegistry& params, const std::string& prefix, int channels, Rng& rng) {
  const int inner = std::max(1, channels / 2);
  for (const char* name : {"theta", "phi", "g"}) {
    params.add(prefix + "." + name + ".weight", nn::he_uniform({inner, channels, 1, 1}, rng));
    params.add(prefix + "." + name + ".bias", Tensor({inner}));
  }
  params.add(prefix + ".out.weight", Tensor({channels, inner, 1, 1}));
  params.add(prefix + ".out.bias", Tensor({channels}));
}

Var nonlocal_block(const Var& x, const ParamRegistry& params, const std::string& prefix) {
  const Shape& s = x.shape();
  require(s.size() == 4, "nonlocal_block: expected [T,C,h,w], got " + shape_str(s));
  const int T = s[0], C = s[1], h = s[2], w = s[3];
  const int N = T * h * w;
  // [T,C,h,w] -> [C,T,h,w] -> [C,1,N]: one column per space-time position.
  Var positions = nn::reshape(nn::swap_leading_axes(x), {C, 1, N});
  Var theta = conv1(params, prefix + ".theta", positions);
  Var phi = conv1(params, prefix + ".phi", positions);
  Var g = conv1(params, prefix + ".g", positions);
  const int inner = theta.shape()[0];
  Var theta_m = nn::reshape(theta, {inner, N});
  Var phi_m = nn::reshape(phi, {inner, N});
  Var g_m = nn::reshape(g, {inner, N});
  Var affinity = nn::softmax(nn::matmul(theta_m, phi_m, true, false), 1);  // [N,N], rows sum to 1
  Var y = nn::matmul(g_m, affinity, false, true);                           // [inner,N]
  Var z = conv1(params, prefix + ".out", nn::reshape(y, {inner, 1, N}));
  Var out = nn::add(positions, z);
  return nn::swap_leading_axes(nn::reshape(out, {C, T, h, w}));
}

void init_convgru(ParamRegistry& params, const std::string& prefix, int in_channels,
                  int hidden_channels, bool bias, Rng& rng) {
  for (const char* k : kGruKernels) {
    const bool from_input = k[0] == 'x';
    const std::string name = prefix + "." + k;
    params.add(name + ".weight",
               nn::he_uniform({hidden_channels, from_input ? in_channels : hidden_channels, 3, 3},
                              rng));
    if (bias) params.add(name + ".bias", Tensor({hidden_channels}));
  }
}

Var convgru_cell(const Var& x_t, const Var& h_prev, const ParamRegistry& params,
                 const std::string& prefix) {
  const Shape& hw = params.get(prefix + ".hh.weight").shape();
  require(h_prev.shape().size() == 3 && h_prev.shape()[0] == hw[0],
          "convgru_cell: hidden state " + shape_str(h_prev.shape()) +
              " does not match kernel " + shape_str(hw));
  require(x_t.shape().size() == 3 && x_t.shape()[1] == h_prev.shape()[1] &&
              x_t.shape()[2] == h_prev.shape()[2],
          "convgru_cell: input " + shape_str(x_t.shape()) + " and hidden state " +
              shape_str(h_prev.shape()) + " differ spatially");
  const std::string p = prefix + ".";
  Var z = nn::sigmoid(nn::add(conv3(params, p + "xz", x_t), conv3(params, p + "hz", h_prev)));
  Var r = nn::sigmoid(nn::add(conv3(params, p + "xr", x_t), conv3(params, p + "hr", h_prev)));
  Var candidate = nn::tanh(
      nn::add(conv3(params, p + "xh", x_t), nn::mul(r, conv3(params, p + "hh", h_prev))));
  return nn::add(nn::mul(nn::one_minus(z), candidate), nn::mul(z, h_prev));
}

Var convgru_forward(const Var& seq, Direction direction, const ParamRegistry& params,
                    const std::string& prefix) {
  const Shape& s = seq.shape();
  require(s.size() == 4 && s[0] >= 1, "convgru_forward: expected [T,C,h,w], got " + shape_str(s));
  const int T = s[0];
  const int hidden = params.get(prefix + ".hh.weight").shape()[0];
  Var h(Tensor({hidden, s[2], s[3]}));
  std::vector<Var> states(T);
  for (int step = 0; step < T; ++step) {
    const int t = direction == Direction::forward ? step : T - 1 - step;
    h = convgru_cell(nn::select(seq, t), h, params, prefix);
    states[t] = h;
  }
  return nn::stack(states);
}

void init_db_convgru(ParamRegistry& params, const std::string& prefix, int channels, bool bias,
                     Rng& rng) {
  init_convgru(params, prefix + ".forward", channels, channels, bias, rng);
  init_convgru(params, prefix + ".backward", channels, channels, bias, rng);
  params.add(prefix + ".fuse_f.weight", nn::he_uniform({channels, channels, 3, 3}, rng));
  params.add(prefix + ".fuse_b.weight", nn::he_uniform({channels, channels, 3, 3}, rng));
}

Var db_convgru(const Var& seq, const ParamRegistry& params, const std::string& prefix) {
  // The backward pass runs over the forward hidden states, not the raw input.
  Var hf = convgru_forward(seq, Direction::forward, params, prefix + ".forward");
  Var hb = convgru_forward(hf, Direction::backward, params, prefix + ".backward");
  const int T = seq.shape()[0];
  std::vector<Var> out(T);
  for (int t = 0; t < T; ++t)
    out[t] = nn::tanh(nn::add(conv3(params, prefix + ".fuse_f", nn::select(hf, t)),
                              conv3(params, prefix + ".fuse_b", nn::select(hb, t))));
  return nn::stack(out);
}

NerModule::NerModule(NerConfig cfg, int channels) : cfg_(cfg), channels_(channels) {
  require(channels >= 1, "NER: channel count must be positive");
}

void NerModule::init_params(ParamRegistry& params, Rng& rng) const {
  if (cfg_.enable_first_nonlocal) init_nonlocal(params, "ner.nonlocal1", channels_, rng);
  if (cfg_.enable_dbconvgru) {
    if (cfg_.bidirectional_depth == NerConfig::Depth::deep)
      init_db_convgru(params, "ner.dbgru", channels_, cfg_.gru_bias, rng);
    else
      init_convgru(params, "ner.gru", channels_, channels_, cfg_.gru_bias, rng);
  }
  if (cfg_.enable_second_nonlocal) init_nonlocal(params, "ner.nonlocal2", channels_, rng);
}

Var NerModule::forward(const ParamRegistry& params, const Var& clip_features) const {
  const Shape& s = clip_features.shape();
  require(s.size() == 4 && s[0] >= 1 && s[1] == channels_,
          "NER: expected [T," + std::to_string(channels_) + ",h,w], got " + shape_str(s));
  Var x = clip_features;
  if (cfg_.enable_first_nonlocal) x = nonlocal_block(x, params, "ner.nonlocal1");
  if (cfg_.enable_dbconvgru) {
    x = cfg_.bidirectional_depth == NerConfig::Depth::deep
            ? db_convgru(x, params, "ner.dbgru")
            : convgru_forward(x, Direction::forward, params, "ner.gru");
  }
  if (cfg_.enable_second_nonlocal) x = nonlocal_block(x, params, "ner.nonlocal2");
  return x;
}

VideoModel::VideoModel(VideoModelConfig cfg)
    : cfg_(std::move(cfg)),
      rcrnet_(cfg_.rcrnet),
      ner_(cfg_.ner, cfg_.rcrnet.backbone.aspp_out_channels) {}

ParamRegistry VideoModel::init_params(Rng& rng) const {
  ParamRegistry params = rcrnet_.init_params(rng);
  init_temporal_params(params, rng);
  return params;
}

void VideoModel::init_temporal_params(ParamRegistry& params, Rng& rng) const {
  ner_.init_params(params, rng);
}

std::vector<Var> VideoModel::forward_logits(const ParamRegistry& params,
                                            const std::vector<Var>& frames) const {
  require(!frames.empty(), "video_forward: empty clip");
  const Shape& first = frames.front().shape();
  for (const auto& f : frames)
    require(f.shape() == first, "video_forward: inconsistent frame sizes " + shape_str(first) +
                                    " and " + shape_str(f.shape()));
  std::vector<SpatialFeatures> feats;
  std::vector<Var> aspp_out;
  for (const auto& f : frames) {
    feats.push_back(rcrnet_.features(params, f));
    aspp_out.push_back(feats.back().aspp);
  }
  Var refined = ner_.forward(params, nn::stack(aspp_out));
  std::vector<Var> logits;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    SpatialFeatures f = feats[t];
    f.aspp = nn::select(refined, static_cast<int>(t));
    logits.push_back(rcrnet_.decode_logits(params, f, first[1], first[2]));
  }
  return logits;
}

std::vector<Var> VideoModel::video_forward(const ParamRegistry& params,
                                           const std::vector<Var>& frames) const {
  std::vector<Var> maps = forward_logits(params, frames);
  for (auto& m : maps) m = nn::sigmoid(m);
  return maps;
}

}  // namespace vsod::model
