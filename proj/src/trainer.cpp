#include "vsod/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>

namespace vsod::train {

namespace {

constexpr const char* kMagic = "vsod-checkpoint";

void shuffle(std::vector<int>& v, nn::Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::string rng_state(const nn::Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void check_finite_loss(double loss, const std::string& stage, long step) {
  require(std::isfinite(loss), stage + " diverged at step " + std::to_string(step) +
                                   " (loss " + std::to_string(loss) + ")");
}

Checkpoint make_checkpoint(const std::string& kind, const TrainConfig& cfg, ParamRegistry params,
                           long step, const nn::Rng& rng) {
  Checkpoint c;
  c.kind = kind;
  c.config_text = cfg.to_config().text();
  c.config_digest = fnv1a_hex(c.config_text);
  c.params = std::move(params);
  c.step = step;
  c.rng_state = rng_state(rng);
  return c;
}

// One still per step, epochs reshuffled from the seeded generator.
void train_on_stills(const model::RcrNet& net, ParamRegistry& params, const std::vector<LabeledImage>& samples,
                     double lr, int steps, const AdamConfig& adam_cfg, const std::string& stage, nn::Rng& rng,
                     std::vector<LossRecord>& log) {
  Adam adam(lr, adam_cfg);
  std::vector<int> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::size_t cursor = order.size();
  for (int step = 0; step < steps; ++step) {
    if (cursor == order.size()) {
      shuffle(order, rng);
      cursor = 0;
    }
    const LabeledImage& s = samples[order[cursor++]];
    const Var loss = bce_loss(net.forward_logits(params, Var(s.frame)), s.mask);
    const double value = loss.value()[0];
    check_finite_loss(value, stage, step);
    nn::backward(loss);
    adam.step(params);
    params.zero_grad();
    log.push_back({step, stage, value});
  }
}

void check_sizes(const Tensor& frame, const TrainConfig& cfg, const std::string& what) {
  require(frame.rank() == 3 && frame.dim(1) == cfg.height && frame.dim(2) == cfg.width,
          what + " has shape " + shape_str(frame.shape()) + ", expected " + std::to_string(cfg.height) + "x" +
              std::to_string(cfg.width));
}

}  // namespace

// ------------------------------------------------------------------ config

void TrainConfig::validate() const {
  require(clip_length >= 1, "clip length must be at least 1");
  require(height > 0 && width > 0 && height % 16 == 0 && width % 16 == 0,
          "input size must be positive multiples of 16");
  require(lr_pretrain > 0 && lr_finetune > 0, "learning rates must be positive");
  require(pretrain_steps >= 0 && fgplg_steps >= 0 && video_steps >= 0, "step counts must be non-negative");
  require(adam.beta1 >= 0 && adam.beta1 < 1 && adam.beta2 >= 0 && adam.beta2 < 1 && adam.eps > 0,
          "invalid Adam constants");
  schedule.validate();
  model.rcrnet.backbone.validate();
  model.rcrnet.classifier.validate(model.rcrnet.backbone);
}

TrainConfig TrainConfig::from_config(const Config& c) {
  TrainConfig t;
  t.clip_length = static_cast<int>(c.get_int("train.clip_length", t.clip_length));
  t.height = static_cast<int>(c.get_int("train.height", t.height));
  t.width = static_cast<int>(c.get_int("train.width", t.width));
  t.lr_pretrain = c.get_double("train.lr_pretrain", t.lr_pretrain);
  t.lr_finetune = c.get_double("train.lr_finetune", t.lr_finetune);
  t.pretrain_steps = static_cast<int>(c.get_int("train.pretrain_steps", t.pretrain_steps));
  t.fgplg_steps = static_cast<int>(c.get_int("train.fgplg_steps", t.fgplg_steps));
  t.video_steps = static_cast<int>(c.get_int("train.video_steps", t.video_steps));
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", static_cast<long>(t.seed)));
  t.schedule.interval = static_cast<int>(c.get_int("train.interval", t.schedule.interval));
  t.schedule.per_interval = static_cast<int>(c.get_int("train.per_interval", t.schedule.per_interval));
  t.adam.beta1 = c.get_double("train.adam_beta1", t.adam.beta1);
  t.adam.beta2 = c.get_double("train.adam_beta2", t.adam.beta2);
  t.adam.eps = c.get_double("train.adam_eps", t.adam.eps);
  auto& cls = t.model.rcrnet.classifier;
  cls.refine_channels = static_cast<int>(c.get_int("model.refine_channels", cls.refine_channels));
  cls.skip_out_channels = static_cast<int>(c.get_int("model.skip_channels", cls.skip_out_channels));
  t.model.rcrnet.backbone.aspp_out_channels =
      static_cast<int>(c.get_int("model.aspp_channels", t.model.rcrnet.backbone.aspp_out_channels));
  const std::string variant = c.get_string("model.ner_variant", "e");
  require(variant.size() == 1, "model.ner_variant must be one letter a-e");
  t.model.ner = model::NerConfig::variant(variant[0]);
  t.model.ner.gru_bias = c.get_bool("model.gru_bias", false);
  t.validate();
  return t;
}

Config TrainConfig::to_config() const {
  Config c;
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  };
  c.set("train.clip_length", std::to_string(clip_length));
  c.set("train.height", std::to_string(height));
  c.set("train.width", std::to_string(width));
  c.set("train.lr_pretrain", num(lr_pretrain));
  c.set("train.lr_finetune", num(lr_finetune));
  c.set("train.pretrain_steps", std::to_string(pretrain_steps));
  c.set("train.fgplg_steps", std::to_string(fgplg_steps));
  c.set("train.video_steps", std::to_string(video_steps));
  c.set("train.seed", std::to_string(seed));
  c.set("train.interval", std::to_string(schedule.interval));
  c.set("train.per_interval", std::to_string(schedule.per_interval));
  c.set("train.adam_beta1", num(adam.beta1));
  c.set("train.adam_beta2", num(adam.beta2));
  c.set("train.adam_eps", num(adam.eps));
  c.set("model.refine_channels", std::to_string(model.rcrnet.classifier.refine_channels));
  c.set("model.skip_channels", std::to_string(model.rcrnet.classifier.skip_out_channels));
  c.set("model.aspp_channels", std::to_string(model.rcrnet.backbone.aspp_out_channels));
  const auto& n = model.ner;
  char variant = 'e';
  for (char v : {'a', 'b', 'c', 'd', 'e'}) {
    const auto ref = model::NerConfig::variant(v);
    if (ref.enable_first_nonlocal == n.enable_first_nonlocal && ref.enable_dbconvgru == n.enable_dbconvgru &&
        ref.enable_second_nonlocal == n.enable_second_nonlocal && ref.bidirectional_depth == n.bidirectional_depth)
      variant = v;
  }
  c.set("model.ner_variant", std::string(1, variant));
  c.set("model.gru_bias", n.gru_bias ? "true" : "false");
  return c;
}

// ------------------------------------------------------------- loss, Adam

Var bce_loss(const Var& logits, const Tensor& target) { return nn::bce_with_logits(logits, target); }

Adam::Adam(double lr, AdamConfig cfg) : lr_(lr), cfg_(cfg) {
  require(lr > 0, "learning rate must be positive");
}

void Adam::step(ParamRegistry& params) {
  for (const auto& [name, p] : params) {
    if (!p.has_grad()) continue;
    const Tensor grad = p.grad();
    for (Scalar g : grad.values())
      require(std::isfinite(g), "non-finite gradient in parameter " + name);
  }
  ++t_;
  const double c1 = 1 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& name : params.names()) {
    Var& p = params.get(name);
    if (!p.has_grad()) continue;
    const Tensor g = p.grad();
    auto [it, fresh] = state_.try_emplace(name);
    if (fresh) it->second = {Tensor(g.shape()), Tensor(g.shape())};
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    Tensor& w = p.mutable_value();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1 - cfg_.beta2) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

// ------------------------------------------------------------- checkpoint

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), "cannot write checkpoint " + path.string());
  std::vector<std::string> names;
  std::vector<std::vector<int>> shapes;
  std::vector<std::vector<Scalar>> values;
  for (const auto& [name, p] : ckpt.params) {
    names.push_back(name);
    shapes.push_back(p.shape());
    values.emplace_back(p.value().values().begin(), p.value().values().end());
  }
  {
    cereal::PortableBinaryOutputArchive ar(os);
    ar(std::string(kMagic), ckpt.format_version, ckpt.kind, ckpt.config_text, ckpt.config_digest, ckpt.step,
       ckpt.rng_state, names, shapes, values);
  }
  require(static_cast<bool>(os), "cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), "cannot read checkpoint " + path.string());
  Checkpoint c;
  std::string magic;
  std::vector<std::string> names;
  std::vector<std::vector<int>> shapes;
  std::vector<std::vector<Scalar>> values;
  try {
    cereal::PortableBinaryInputArchive ar(is);
    ar(magic);
    require(magic == kMagic, path.string() + " is not a checkpoint");
    ar(c.format_version);
    require(c.format_version == Checkpoint::kFormatVersion,
            path.string() + ": unsupported checkpoint version " + std::to_string(c.format_version));
    ar(c.kind, c.config_text, c.config_digest, c.step, c.rng_state, names, shapes, values);
  } catch (const cereal::Exception& e) {
    throw Error("corrupt checkpoint " + path.string() + ": " + e.what());
  }
  require(fnv1a_hex(c.config_text) == c.config_digest, path.string() + ": config digest mismatch");
  require(names.size() == shapes.size() && names.size() == values.size(), path.string() + ": inconsistent tables");
  for (std::size_t i = 0; i < names.size(); ++i) c.params.add(names[i], Tensor(shapes[i], values[i]));
  return c;
}

std::string loss_csv(const std::vector<LossRecord>& records) {
  std::string out = "step,stage,loss\n";
  char line[128];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%ld,%s,%.9g\n", r.step, r.stage.c_str(), r.loss);
    out += line;
  }
  return out;
}

// --------------------------------------------------------------- training

TrainResult pretrain_rcrnet(const std::vector<LabeledImage>& stills, const TrainConfig& cfg,
                            const ParamRegistry* init) {
  cfg.validate();
  require(!stills.empty(), "pretraining needs at least one labeled image");
  for (const auto& s : stills) check_sizes(s.frame, cfg, "pretraining image");
  nn::Rng rng(cfg.seed);
  const model::RcrNet net(cfg.model.rcrnet);
  ParamRegistry params = init ? init->clone() : net.init_params(rng);
  TrainResult out;
  train_on_stills(net, params, stills, cfg.lr_pretrain, cfg.pretrain_steps, cfg.adam, "pretrain", rng, out.losses);
  out.checkpoint = make_checkpoint("rcrnet", cfg, std::move(params), cfg.pretrain_steps, rng);
  return out;
}

TrainResult train_fgplg(const std::vector<LabeledImage>& samples, const TrainConfig& cfg,
                        const ParamRegistry& pretrained_rgb) {
  cfg.validate();
  require(!samples.empty(), "no valid FGPLG training triplets");
  for (const auto& s : samples) {
    check_sizes(s.frame, cfg, "generator input");
    require(s.frame.dim(0) == fgplg::kInputChannels, "generator inputs must have 7 planes");
  }
  nn::Rng rng(cfg.seed);
  const model::RcrNet net(fgplg::generator_config(cfg.model.rcrnet));
  ParamRegistry params = fgplg::extend_input_channels(pretrained_rgb, fgplg::kInputChannels);
  TrainResult out;
  train_on_stills(net, params, samples, cfg.lr_finetune, cfg.fgplg_steps, cfg.adam, "fgplg", rng, out.losses);
  out.checkpoint = make_checkpoint("fgplg", cfg, std::move(params), cfg.fgplg_steps, rng);
  return out;
}

std::vector<std::pair<int, int>> clip_windows(int num_frames, int clip_length) {
  require(num_frames >= 1 && clip_length >= 1, "clip windows need positive sizes");
  if (num_frames <= clip_length) return {{0, num_frames}};
  std::vector<std::pair<int, int>> out;
  for (int s = 0; s < num_frames; s += clip_length)
    out.emplace_back(std::min(s, num_frames - clip_length), clip_length);
  return out;
}

Var clip_loss(const model::VideoModel& model, const ParamRegistry& params, const std::vector<Tensor>& frames,
              const std::vector<Tensor>& labels) {
  require(frames.size() == labels.size(), "clip_loss: frame and label counts differ");
  std::vector<Var> inputs(frames.begin(), frames.end());
  bool any = false;
  for (const auto& l : labels) any = any || !l.empty();
  if (!any) return Var();
  const std::vector<Var> logits = model.forward_logits(params, inputs);
  Var total;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t].empty()) continue;
    const Var l = bce_loss(logits[t], labels[t]);
    total = total.defined() ? nn::add(total, l) : l;
  }
  return total;
}

TrainResult train_video_model(const std::vector<VideoSample>& videos, const TrainConfig& cfg,
                              const ParamRegistry& pretrained_rgb) {
  cfg.validate();
  struct Window {
    int video, start, length;
  };
  std::vector<Window> windows;
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto& vid = videos[v];
    require(vid.frames.size() == vid.labels.size(), vid.name + ": frame and label counts differ");
    for (const auto& f : vid.frames) check_sizes(f, cfg, vid.name + " frame");
    for (auto [s, n] : clip_windows(static_cast<int>(vid.frames.size()), cfg.clip_length)) {
      bool labeled = false;
      for (int t = s; t < s + n; ++t) labeled = labeled || !vid.labels[t].empty();
      if (labeled) windows.push_back({static_cast<int>(v), s, n});
    }
  }
  require(!windows.empty(), "no labeled clips to train on");

  nn::Rng rng(cfg.seed);
  const model::VideoModel model(cfg.model);
  ParamRegistry params = pretrained_rgb.clone();
  model.init_temporal_params(params, rng);
  Adam adam(cfg.lr_finetune, cfg.adam);
  std::vector<int> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::size_t cursor = order.size();
  TrainResult out;
  for (int step = 0; step < cfg.video_steps; ++step) {
    if (cursor == order.size()) {
      shuffle(order, rng);
      cursor = 0;
    }
    const Window& w = windows[order[cursor++]];
    const auto& vid = videos[w.video];
    const std::vector<Tensor> frames(vid.frames.begin() + w.start, vid.frames.begin() + w.start + w.length);
    const std::vector<Tensor> labels(vid.labels.begin() + w.start, vid.labels.begin() + w.start + w.length);
    const Var loss = clip_loss(model, params, frames, labels);
    const double value = loss.value()[0];
    check_finite_loss(value, "video", step);
    nn::backward(loss);
    adam.step(params);
    params.zero_grad();
    out.losses.push_back({step, "video", value});
  }
  out.checkpoint = make_checkpoint("video", cfg, std::move(params), cfg.video_steps, rng);
  return out;
}

}  // namespace vsod::train
