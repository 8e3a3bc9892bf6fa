// Acceptance run: one PASS/FAIL line per criterion. Arguments select criteria by
// number (default: all). Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metric_oracles.hpp"
#include "oracles.hpp"
#include "vsod/cli.hpp"
#include "vsod/grad_check.hpp"
#include "vsod/metrics.hpp"
#include "vsod/pipeline.hpp"

using namespace vsod;
using nn::ParamRegistry;
using nn::Rng;
using nn::Var;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures so a criterion reports every broken check, not just the first.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void below(double value, double bound, const std::string& what) {
    if (!(value < bound)) failures_.push_back(what + " = " + fmt(value) + " (bound " + fmt(bound) + ")");
  }
  void note(const std::string& s) { notes_.push_back(s); }

  Outcome outcome() const {
    Outcome o;
    o.pass = failures_.empty();
    const auto& lines = o.pass ? notes_ : failures_;
    for (std::size_t i = 0; i < lines.size(); ++i) o.detail += (i ? "; " : "") + lines[i];
    return o;
  }

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
  }

 private:
  std::vector<std::string> failures_, notes_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void randomise(ParamRegistry& params, const std::string& prefix, std::mt19937_64& rng, double bound) {
  for (const auto& name : params.names())
    if (name.rfind(prefix, 0) == 0)
      params.get(name).mutable_value() = oracle::random_tensor(params.get(name).shape(), rng, -bound, bound);
}

std::vector<Var> with_params(std::vector<Var> leaves, const ParamRegistry& params) {
  for (const auto& [_, v] : params) leaves.push_back(v);
  return leaves;
}

oracle::GruWeights gru_weights(const ParamRegistry& p, const std::string& prefix) {
  return {p.get(prefix + ".xz.weight").value(), p.get(prefix + ".hz.weight").value(),
          p.get(prefix + ".xr.weight").value(), p.get(prefix + ".hr.weight").value(),
          p.get(prefix + ".xh.weight").value(), p.get(prefix + ".hh.weight").value()};
}

// ------------------------------------------------------------------ 1

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Checks c;
  std::mt19937_64 data(1);
  nn::GradCheckOptions opts;
  opts.eps = 1e-5;
  nn::GradCheckOptions sampled = opts;
  sampled.max_coords = 24;
  double worst = 0;
  auto check = [&](const std::string& name, const std::function<Var()>& fn, const std::vector<Var>& leaves,
                   const nn::GradCheckOptions& o) {
    const double err = nn::grad_check(fn, leaves, o).max_relative_error;
    worst = std::max(worst, err);
    c.below(err, 1e-4, name);
  };

  Var x(oracle::random_tensor({2, 6, 7}, data), true);
  Var w(oracle::random_tensor({3, 2, 3, 3}, data), true);
  Var b(oracle::random_tensor({3}, data), true);
  check("conv2d", [&] { return nn::conv2d(x, w, b); }, {x, w, b}, opts);
  check("conv2d dilated", [&] { return nn::conv2d(x, w, b, nn::ConvOptions{2, 1, nn::kSamePadding}); }, {x, w, b},
        opts);
  check("conv2d strided", [&] { return nn::conv2d(x, w, b, nn::ConvOptions{1, 2, nn::kSamePadding}); }, {x, w, b},
        opts);
  check("bilinear_resize", [&] { return nn::bilinear_resize(x, 11, 4); }, {x}, opts);

  model::BackboneConfig backbone;
  {
    ParamRegistry p;
    Rng rng(2);
    model::init_backbone(p, backbone, rng);
    ParamRegistry aspp_only;
    for (const auto& [name, v] : p)
      if (name.rfind("aspp.", 0) == 0) aspp_only.add(name, v.value());
    Var f(oracle::random_tensor({backbone.stage_channels[4], 3, 3}, data), true);
    check("aspp", [&] { return model::aspp(f, backbone, aspp_only); }, with_params({f}, aspp_only), sampled);
  }
  {
    ParamRegistry p;
    Rng rng(3);
    model::init_residual_skip(p, "s", 8, 4, rng);
    randomise(p, "s.bottleneck.expand", data, 0.3);
    Var s(oracle::random_tensor({8, 5, 5}, data), true);
    check("residual_skip", [&] { return model::residual_skip(s, p, "s"); }, with_params({s}, p), opts);
  }
  {
    ParamRegistry p;
    Rng rng(4);
    p.add("r.weight", nn::he_uniform({5, 7, 3, 3}, rng));
    p.add("r.bias", oracle::random_tensor({5}, data, -0.1, 0.1));
    Var top(oracle::random_tensor({4, 3, 3}, data), true), skip(oracle::random_tensor({3, 6, 6}, data), true);
    check("refine_block", [&] { return model::refine_block(top, skip, p, "r"); }, with_params({top, skip}, p),
          sampled);
  }
  {
    ParamRegistry p;
    Rng rng(5);
    model::init_nonlocal(p, "nl", 4, rng);
    randomise(p, "nl", data, 0.5);
    Var v(oracle::random_tensor({2, 4, 3, 3}, data), true);
    check("nonlocal_block", [&] { return model::nonlocal_block(v, p, "nl"); }, with_params({v}, p), sampled);
  }
  {
    ParamRegistry p;
    Rng rng(6);
    model::init_convgru(p, "g", 3, 2, true, rng);
    Var xt(oracle::random_tensor({3, 4, 4}, data), true), h(oracle::random_tensor({2, 4, 4}, data), true);
    check("convgru_cell", [&] { return model::convgru_cell(xt, h, p, "g"); }, with_params({xt, h}, p), sampled);
  }
  {
    ParamRegistry p;
    Rng rng(7);
    model::init_db_convgru(p, "d", 3, false, rng);
    Var seq(oracle::random_tensor({3, 3, 4, 4}, data), true);
    check("db_convgru", [&] { return model::db_convgru(seq, p, "d"); }, with_params({seq}, p), sampled);
  }
  {
    Tensor target({3, 6, 7});
    for (auto& v : target.values()) v = std::uniform_real_distribution<double>(0, 1)(data);
    check("bce_loss composition",
          [&] { return train::bce_loss(nn::conv2d(nn::sigmoid(x), w, b), target); }, {x, w, b}, opts);
  }
  {
    model::VideoModelConfig cfg;
    cfg.rcrnet.classifier.refine_channels = 8;
    const model::VideoModel m(cfg);
    Rng rng(8);
    ParamRegistry p = m.init_params(rng);
    randomise(p, "ner.nonlocal", data, 0.2);
    for (const auto& name : p.names())
      if (name.find("expand") != std::string::npos)
        p.get(name).mutable_value() = oracle::random_tensor(p.get(name).shape(), data, -0.3, 0.3);
    Var f0(oracle::random_tensor({3, 32, 32}, data, 0, 1), true), f1(oracle::random_tensor({3, 32, 32}, data, 0, 1), true);
    nn::GradCheckOptions o = opts;
    o.max_coords = 12;
    check("video_forward 32x32 T=2", [&] { return nn::stack(m.video_forward(p, {f0, f1})); }, with_params({f0, f1}, p),
          o);
  }
  const double secs = seconds_since(t0);
  c.below(secs, 300, "runtime seconds");
  c.note("max relative error " + Checks::fmt(worst) + " over 12 checks");
  return c.outcome();
}

// ------------------------------------------------------------------ 2

Outcome structural_invariants() {
  Checks c;
  model::RcrNetConfig cfg;
  cfg.classifier.refine_channels = 8;
  const model::RcrNet net(cfg);
  Rng rng(1);
  const ParamRegistry params = net.init_params(rng);
  std::mt19937_64 data(2);
  {
    nn::NoGradGuard guard;
    for (auto [h, w] : {std::pair{64, 64}, std::pair{96, 160}, std::pair{448, 448}}) {
      const auto f = net.features(params, Var(oracle::random_tensor({3, h, w}, data, 0, 1)));
      c.expect(f.aspp.shape() == Shape{cfg.backbone.aspp_out_channels, h / 16, w / 16},
               "output stride at " + std::to_string(h) + "x" + std::to_string(w) + " is " + shape_str(f.aspp.shape()));
    }
  }
  double worst = 0;
  {
    ParamRegistry p;
    model::init_residual_skip(p, "s", 16, 6, rng);
    Var x(oracle::random_tensor({16, 8, 8}, data));
    const double d =
        max_abs_diff(model::residual_skip(x, p, "s").value(), nn::conv2d(x, p.get("s.project.weight")).value());
    worst = std::max(worst, d);
    c.expect(d <= 1e-12, "residual_skip differs from projection by " + Checks::fmt(d));
  }
  {
    ParamRegistry p;
    model::init_nonlocal(p, "nl", 8, rng);
    const Tensor x = oracle::random_tensor({3, 8, 4, 5}, data);
    const double d = max_abs_diff(model::nonlocal_block(Var(x), p, "nl").value(), x);
    worst = std::max(worst, d);
    c.expect(d <= 1e-12, "non-local block differs from identity by " + Checks::fmt(d));
  }
  {
    const model::RcrNet gen(fgplg::generator_config(cfg));
    const ParamRegistry extended = fgplg::extend_input_channels(params, fgplg::kInputChannels);
    const Tensor frame = oracle::random_tensor({3, 32, 32}, data, 0, 1);
    const Tensor gi = oracle::random_tensor({1, 32, 32}, data, 0, 1), gj = oracle::random_tensor({1, 32, 32}, data, 0, 1);
    const Tensor fi = oracle::random_tensor({2, 32, 32}, data, -4, 4), fj = oracle::random_tensor({2, 32, 32}, data, -4, 4);
    const Tensor pg = fgplg::generate_pseudo_label(gen, extended, {0, 2, 5}, frame, gi, gj, fi, fj);
    nn::NoGradGuard guard;
    const double d = max_abs_diff(pg, net.forward_single(params, Var(frame)).value());
    worst = std::max(worst, d);
    c.expect(d <= 1e-12, "generator at init differs from RGB network by " + Checks::fmt(d));
  }
  c.note("OS=16 on 3 sizes; zero-init identities max diff " + Checks::fmt(worst));
  return c.outcome();
}

// ------------------------------------------------------------------ 3

Outcome gru_fidelity() {
  Checks c;
  std::mt19937_64 data(3);
  double cell_err = 0, db_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ParamRegistry p;
    Rng rng(100 + trial);
    model::init_convgru(p, "g", 3, 2, false, rng);
    const Tensor x = oracle::random_tensor({3, 5, 4}, data), h = oracle::random_tensor({2, 5, 4}, data);
    cell_err = std::max(cell_err, max_abs_diff(model::convgru_cell(Var(x), Var(h), p, "g").value(),
                                               oracle::gru_step(x, h, gru_weights(p, "g"))));

    ParamRegistry q;
    model::init_db_convgru(q, "d", 3, false, rng);
    const int T = 1 + trial % 4;
    std::vector<Tensor> xs;
    Tensor seq({T, 3, 4, 5});
    for (int t = 0; t < T; ++t) {
      xs.push_back(oracle::random_tensor({3, 4, 5}, data));
      std::copy_n(xs.back().data(), 60, seq.data() + t * 60);
    }
    const auto ref = oracle::db_gru(xs, gru_weights(q, "d.forward"), gru_weights(q, "d.backward"),
                                    q.get("d.fuse_f.weight").value(), q.get("d.fuse_b.weight").value());
    const Tensor lib = model::db_convgru(Var(seq), q, "d").value();
    for (int t = 0; t < T; ++t)
      for (int i = 0; i < 60; ++i) db_err = std::max(db_err, std::abs(lib[t * 60 + i] - ref[t][i]));
  }
  c.expect(cell_err <= 1e-12, "convgru_cell vs transcription " + Checks::fmt(cell_err));
  c.expect(db_err <= 1e-12, "db_convgru vs transcription " + Checks::fmt(db_err));

  bool halving = true;
  for (int trial = 0; trial < 20; ++trial) {
    ParamRegistry p;
    Rng rng(200 + trial);
    model::init_convgru(p, "g", 3, 2, trial % 2 == 1, rng);
    for (const auto& n : p.names()) p.get(n).mutable_value().fill(0);
    const Tensor h0 = oracle::random_tensor({2, 4, 4}, data);
    Tensor h = h0;
    for (int step = 1; step <= 3; ++step) {
      h = model::convgru_cell(Var(oracle::random_tensor({3, 4, 4}, data)), Var(h), p, "g").value();
      for (std::size_t i = 0; i < h.size(); ++i) halving = halving && h[i] == std::ldexp(h0[i], -step);
    }
  }
  c.expect(halving, "zero-weight ConvGRU does not halve the state exactly");
  c.note("cell err " + Checks::fmt(cell_err) + ", DB err " + Checks::fmt(db_err) + ", 0.5*h exact");
  return c.outcome();
}

// ------------------------------------------------------------------ 4

oracle::Grid to_grid(const Tensor& t) {
  const int H = t.dim(1), W = t.dim(2);
  oracle::Grid g(H, std::vector<double>(W));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) g[y][x] = t[y * W + x];
  return g;
}

std::pair<Tensor, Tensor> random_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  const double density = u(rng) < 0.1 ? (u(rng) < 0.5 ? 0.0 : 1.0) : u(rng);
  Tensor pred({1, 8, 8}), gt({1, 8, 8});
  for (int i = 0; i < 64; ++i) {
    gt[i] = u(rng) < density ? 1 : 0;
    const double noisy = std::clamp(0.6 * gt[i] + 0.5 * u(rng) - 0.05, 0.0, 1.0);
    pred[i] = std::floor(noisy * 255 + 0.5) / 255;
  }
  return {pred, gt};
}

Outcome metric_oracles() {
  Checks c;
  const metrics::MetricsConfig cfg;
  std::mt19937_64 rng(4);
  std::vector<double> grid(256);
  for (int k = 0; k < 256; ++k) grid[k] = k / 255.0;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto [pred, gt] = random_instance(rng);
    const auto gp = to_grid(pred), gg = to_grid(gt);
    const auto curve = metrics::pr_curve({pred}, {gt}, cfg);
    const auto ref = oracle::pr_brute({gp}, {gg}, grid);
    for (std::size_t k = 0; k < ref.size(); ++k)
      worst = std::max({worst, std::abs(curve[k].precision - ref[k].p), std::abs(curve[k].recall - ref[k].r)});
    worst = std::max(worst, std::abs(metrics::max_f_measure(curve, cfg) - oracle::max_f_brute(ref, 0.3)));
    worst = std::max(worst, std::abs(metrics::s_measure(pred, gt, cfg) - oracle::s_measure_ref(gp, gg)));
    const Tensor pm = metrics::binarize(pred, 0.5);
    worst = std::max(worst, std::abs(metrics::jaccard(pm, gt) - oracle::jaccard_brute(to_grid(pm), gg)));
    worst = std::max(worst, std::abs(metrics::contour_accuracy(pm, gt, cfg) -
                                     oracle::boundary_f_brute(to_grid(pm), gg, metrics::boundary_tolerance(8, 8, cfg))));
  }
  c.expect(worst <= 1e-9, "metric vs brute-force oracle " + Checks::fmt(worst));

  char worked[16];
  std::snprintf(worked, sizeof worked, "%.5f", metrics::max_f_measure({{0.5, 0.8, 0.5}}, cfg));
  c.expect(std::string(worked) == "0.70270", std::string("maxF worked value ") + worked);
  Tensor a({1, 2, 2}, {1, 1, 0, 0}), b({1, 2, 2}, {0, 1, 0, 1});
  c.expect(metrics::jaccard(a, b) == 1.0 / 3.0, "Jaccard worked value " + Checks::fmt(metrics::jaccard(a, b)));
  c.note("100 instances, max diff " + Checks::fmt(worst) + "; maxF " + worked + ", J 1/3");
  return c.outcome();
}

// ------------------------------------------------------------------ 5

Outcome warp_oracle() {
  Checks c;
  std::mt19937_64 rng(5);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor m = oracle::random_tensor({1, 8, 8}, rng, 0, 1);
    const Tensor flow = oracle::random_tensor({2, 8, 8}, rng, -3, 3);
    worst = std::max(worst, max_abs_diff(fgplg::warp_mask(Var(m), flow).value(), oracle::warp_reference(m, flow)));
  }
  c.expect(worst <= 1e-12, "warp vs brute force " + Checks::fmt(worst));
  const Tensor m = oracle::random_tensor({1, 16, 16}, rng, 0, 1);
  c.expect(fgplg::warp_mask(Var(m), Tensor({2, 16, 16})).value() == m, "zero flow is not bit-exact identity");

  data::SynthSpec spec;
  spec.seed = 5;
  double min_iou = 1;
  for (int v = 0; v < spec.num_videos; ++v) {
    const data::SynthClip clip = data::synth_video(spec, v);
    const auto flows = clip.consecutive_flows();
    for (int t = 0; t + 1 < spec.frames_per_video; ++t) {
      const Tensor warped = fgplg::warp_mask(Var(clip.masks[t]), flows[t]).value();
      min_iou = std::min(min_iou, metrics::jaccard(metrics::binarize(warped, 0.5), clip.masks[t + 1]));
    }
  }
  c.expect(min_iou == 1.0, "synthetic warp IoU " + Checks::fmt(min_iou));
  c.note("100 cases max diff " + Checks::fmt(worst) + "; synthetic warp IoU " + Checks::fmt(min_iou));
  return c.outcome();
}

// ------------------------------------------------------------------ 6

// Desk-scale settings for the synthetic pipeline.
struct EndToEndSettings {
  int pretrain_steps = 1500;
  int fgplg_steps = 600;
  int video_steps = 600;
  double lr_pretrain = 1e-3;
  double lr_finetune = 3e-4;
  int clip_length = 4;
  int train_videos = 6;
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct SeedResult {
  double pseudo_iou = 0;
  double heldout_with_pseudo = 0;
  double heldout_gt_only = 0;
  double train_labeled = 0;
};

double max_f(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts) {
  return metrics::max_f_measure(metrics::pr_curve(preds, gts));
}

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  const EndToEndSettings s;
  Checks c;
  const fs::path root = fs::temp_directory_path() / "vsod_acceptance_e2e";
  fs::remove_all(root);
  data::SynthSpec spec;  // 8 videos x 24 frames at 64x64
  spec.seed = 0;
  data::write_synth_dataset(root, spec, s.train_videos);
  const data::Dataset train_set = data::load_dataset(root, "train");
  const data::Dataset test_set = data::load_dataset(root, "test");
  const int l = 5;
  const pipeline::FlowSettings flow;  // oracle

  struct Loaded {
    std::vector<Tensor> frames, masks, gt;
  };
  auto load = [&](const data::Video& v) {
    return Loaded{pipeline::load_frames(v, spec.height, spec.width), pipeline::all_masks(v, spec.height, spec.width),
                  pipeline::sparse_gt(v, l, spec.height, spec.width)};
  };
  std::vector<Loaded> train_data, test_data;
  for (const auto& v : train_set.videos) train_data.push_back(load(v));
  for (const auto& v : test_set.videos) test_data.push_back(load(v));

  std::vector<SeedResult> results;
  for (std::uint64_t seed : s.seeds) {
    train::TrainConfig cfg;
    cfg.seed = seed;
    cfg.height = spec.height;
    cfg.width = spec.width;
    cfg.clip_length = s.clip_length;
    cfg.pretrain_steps = s.pretrain_steps;
    cfg.fgplg_steps = s.fgplg_steps;
    cfg.video_steps = s.video_steps;
    cfg.lr_pretrain = s.lr_pretrain;
    cfg.lr_finetune = s.lr_finetune;
    cfg.schedule = {l, 1};

    std::vector<train::LabeledImage> stills, triplets;
    for (std::size_t v = 0; v < train_data.size(); ++v) {
      const auto more = pipeline::labeled_stills(train_data[v].frames, train_data[v].gt);
      stills.insert(stills.end(), more.begin(), more.end());
      const auto samples =
          pipeline::generator_samples(train_set.videos[v], train_data[v].frames, train_data[v].gt, l, flow);
      triplets.insert(triplets.end(), samples.begin(), samples.end());
    }
    const auto pre = train::pretrain_rcrnet(stills, cfg);
    const auto gen = train::train_fgplg(triplets, cfg, pre.checkpoint.params);
    const model::RcrNet generator(fgplg::generator_config(cfg.model.rcrnet));

    SeedResult r;
    std::vector<train::VideoSample> with_pseudo, gt_only;
    int pseudo_count = 0;
    for (std::size_t v = 0; v < train_data.size(); ++v) {
      const auto& d = train_data[v];
      const auto plan = fgplg::build_pseudo_schedule(static_cast<int>(d.frames.size()), cfg.schedule);
      const auto pseudo = pipeline::generate_pseudo_labels(train_set.videos[v], d.frames, d.gt, plan, generator,
                                                           gen.checkpoint.params, flow);
      train::VideoSample a{train_set.videos[v].name(), d.frames, {}, {}}, b = a;
      for (std::size_t k = 0; k < plan.size(); ++k) {
        const bool is_pseudo = plan[k].kind == data::LabelKind::pseudo;
        if (is_pseudo) {
          r.pseudo_iou += metrics::jaccard(metrics::binarize(pseudo[k], 0.5), d.masks[k]);
          ++pseudo_count;
        }
        a.labels.push_back(is_pseudo ? pseudo[k] : d.gt[k]);
        a.kinds.push_back(plan[k].kind);
        b.labels.push_back(d.gt[k]);
        b.kinds.push_back(is_pseudo ? data::LabelKind::unlabeled : plan[k].kind);
      }
      with_pseudo.push_back(std::move(a));
      gt_only.push_back(std::move(b));
    }
    r.pseudo_iou /= pseudo_count;

    const model::VideoModel model(cfg.model);
    auto heldout = [&](const ParamRegistry& params) {
      std::vector<Tensor> preds, gts;
      for (const auto& d : test_data) {
        const auto maps = pipeline::predict_video(model, params, d.frames, cfg.clip_length);
        preds.insert(preds.end(), maps.begin(), maps.end());
        gts.insert(gts.end(), d.masks.begin(), d.masks.end());
      }
      return max_f(preds, gts);
    };
    const auto full = train::train_video_model(with_pseudo, cfg, pre.checkpoint.params);
    const auto sparse = train::train_video_model(gt_only, cfg, pre.checkpoint.params);
    r.heldout_with_pseudo = heldout(full.checkpoint.params);
    r.heldout_gt_only = heldout(sparse.checkpoint.params);

    std::vector<Tensor> preds, gts;
    for (std::size_t v = 0; v < train_data.size(); ++v) {
      const auto maps = pipeline::predict_video(model, full.checkpoint.params, train_data[v].frames, cfg.clip_length);
      for (std::size_t k = 0; k < maps.size(); ++k)
        if (with_pseudo[v].kinds[k] != data::LabelKind::unlabeled) {
          preds.push_back(maps[k]);
          gts.push_back(train_data[v].masks[k]);
        }
    }
    r.train_labeled = max_f(preds, gts);
    std::printf("  seed %llu: pseudo IoU %.4f, held-out maxF 1/5 %.4f vs 0/5 %.4f, labeled-frame maxF %.4f (%.0f s)\n",
                static_cast<unsigned long long>(seed), r.pseudo_iou, r.heldout_with_pseudo, r.heldout_gt_only,
                r.train_labeled, seconds_since(t0));
    std::fflush(stdout);
    results.push_back(r);
  }
  fs::remove_all(root);

  double iou = 0, with_pseudo = 0, gt_only = 0, labeled = 1;
  for (const auto& r : results) {
    iou += r.pseudo_iou / results.size();
    with_pseudo += r.heldout_with_pseudo / results.size();
    gt_only += r.heldout_gt_only / results.size();
    labeled = std::min(labeled, r.train_labeled);
  }
  const double secs = seconds_since(t0);
  c.expect(iou >= 0.8, "(a) mean pseudo-label IoU " + Checks::fmt(iou) + " < 0.8");
  c.expect(with_pseudo >= gt_only,
           "(b) held-out maxF 1/5 " + Checks::fmt(with_pseudo) + " < 0/5 " + Checks::fmt(gt_only));
  c.expect(labeled >= 0.95, "(c) labeled-frame maxF " + Checks::fmt(labeled) + " < 0.95");
  c.below(secs, 45 * 60, "runtime seconds");
  c.note("(a) IoU " + Checks::fmt(iou) + " (b) 1/5 " + Checks::fmt(with_pseudo) + " >= 0/5 " + Checks::fmt(gt_only) +
         " (c) min labeled maxF " + Checks::fmt(labeled));
  return c.outcome();
}

// ------------------------------------------------------------------ 7

Outcome schedule_accounting() {
  Checks c;
  struct Case {
    int l, m, gt_pct, pseudo_pct;
  };
  for (const Case k : {Case{5, 1, 20, 20}, Case{20, 7, 5, 35}, Case{1, 0, 100, 0}}) {
    for (int n : {k.l, 2 * k.l, 20 * k.l, 100, 140}) {
      if (n % k.l) continue;
      const auto plan = fgplg::build_pseudo_schedule(n, {k.l, k.m});
      int gt = 0, pseudo = 0;
      for (const auto& e : plan) {
        gt += e.kind == data::LabelKind::gt;
        pseudo += e.kind == data::LabelKind::pseudo;
      }
      const std::string tag = std::to_string(k.m) + "/" + std::to_string(k.l) + " N=" + std::to_string(n);
      c.expect(gt * 100 == k.gt_pct * n, tag + ": " + std::to_string(gt) + " GT");
      c.expect(pseudo * 100 == k.pseudo_pct * n, tag + ": " + std::to_string(pseudo) + " pseudo");
    }
  }
  c.note("1/5 -> 20/20, 7/20 -> 5/35, 0/1 -> 100/0");
  return c.outcome();
}

// ------------------------------------------------------------------ 8

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    files[fs::relative(e.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(is), {});
  }
  return files;
}

Outcome determinism() {
  Checks c;
  auto pipeline_run = [&](const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    data::write_text(dir / "cfg.txt",
                     "synth.videos = 3\nsynth.frames = 12\nsynth.height = 32\nsynth.width = 32\n"
                     "synth.min_half_size = 5\nsynth.max_half_size = 8\nsynth.train_videos = 2\n"
                     "train.height = 32\ntrain.width = 32\nmodel.refine_channels = 8\ntrain.clip_length = 3\n"
                     "train.lr_pretrain = 1e-3\ntrain.lr_finetune = 1e-3\n");
    const std::string cfg = (dir / "cfg.txt").string(), ds = (dir / "ds").string();
    auto p = [&](const char* name) { return (dir / name).string(); };
    const std::vector<std::vector<std::string>> steps = {
        {"synth", "--out", ds},
        {"pretrain", "--data", ds, "--interval", "5", "--steps", "20", "--out", p("pre.ckpt"), "--log", p("pre.csv")},
        {"train-fgplg", "--data", ds, "--init", p("pre.ckpt"), "--interval", "5", "--steps", "10", "--out", p("gen.ckpt")},
        {"gen-pseudo", "--data", ds, "--model", p("gen.ckpt"), "--interval", "5", "--per-interval", "1", "--out", p("plan")},
        {"train", "--data", ds, "--plan", p("plan"), "--init", p("pre.ckpt"), "--steps", "10", "--out", p("video.ckpt"),
         "--log", p("video.csv")},
        {"eval", "--data", ds, "--split", "test", "--model", p("video.ckpt"), "--out", p("report.txt")},
        {"plot-pr", "--data", ds, "--split", "test", "--model", p("video.ckpt"), "--out", p("pr.csv")},
    };
    for (const auto& args : steps) {
      std::vector<std::string> full = {"--config", cfg, "--seed", "7"};
      full.insert(full.end(), args.begin(), args.end());
      std::ostringstream out, err;
      const int code = run_cli(full, out, err);
      c.expect(code == 0, args[0] + " failed: " + err.str());
      if (code != 0) return std::map<std::string, std::string>{};
    }
    return snapshot(dir);
  };
  const fs::path base = fs::temp_directory_path() / "vsod_acceptance_det";
  const auto a = pipeline_run(base / "a");
  const auto b = pipeline_run(base / "b");
  c.expect(!a.empty() && a.size() == b.size(), "runs produced different file sets");
  int compared = 0, checkpoints = 0, pseudo = 0;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      c.expect(false, name + " differs between runs");
      continue;
    }
    ++compared;
    checkpoints += name.size() > 5 && name.ends_with(".ckpt");
    pseudo += name.rfind("plan", 0) == 0 && name.ends_with(".png");
  }
  c.expect(checkpoints == 3 && pseudo > 0 && a.count("report.txt"), "expected artifacts missing");
  fs::remove_all(base);
  c.note(std::to_string(compared) + " files byte-identical (" + std::to_string(checkpoints) + " checkpoints, " +
         std::to_string(pseudo) + " pseudo-labels, report)");
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"structural invariants", structural_invariants},
      {"ConvGRU fidelity", gru_fidelity},
      {"metric oracle equivalence", metric_oracles},
      {"warp oracle", warp_oracle},
      {"end-to-end synthetic pipeline", end_to_end},
      {"schedule accounting", schedule_accounting},
      {"determinism", determinism},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);

  int failed = 0;
  for (int n : selected) {
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "no criterion %d\n", n);
      return 2;
    }
    const auto& [name, run] = criteria[n - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("ACCEPTANCE %d %s: %s (%s; %.1f s)\n", n, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
