#include "vsod/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>

#include "vsod/config.hpp"
#include "vsod/metrics.hpp"
#include "vsod/pipeline.hpp"

namespace vsod {

namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kKnownKeys = {
    "seed",
    "train.clip_length", "train.height", "train.width", "train.lr_pretrain", "train.lr_finetune",
    "train.pretrain_steps", "train.fgplg_steps", "train.video_steps", "train.seed", "train.interval",
    "train.per_interval", "train.adam_beta1", "train.adam_beta2", "train.adam_eps",
    "model.refine_channels", "model.skip_channels", "model.aspp_channels", "model.ner_variant", "model.gru_bias",
    "synth.videos", "synth.frames", "synth.height", "synth.width", "synth.train_videos", "synth.motion",
    "synth.max_speed", "synth.integer_velocity", "synth.distractor", "synth.min_half_size",
    "synth.max_half_size", "synth.contrast", "synth.shapes",
    "flow.method", "flow.search_radius", "flow.patch_radius",
    "metrics.beta_sq", "metrics.num_thresholds", "metrics.averaging", "metrics.dense_thresholds"};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// Global state shared by subcommands: config file, seed, streams.
struct Context {
  std::string config_path;
  std::optional<long> seed_flag;
  std::ostream* out;
  std::ostream* err;

  Config config;

  void load() {
    if (!config_path.empty()) config = Config::load(config_path);
    const auto unknown = config.unknown_keys(kKnownKeys);
    require(unknown.empty(), "unknown config key '" + (unknown.empty() ? "" : unknown.front()) + "'");
    std::optional<long> seed = seed_flag;
    if (!seed) {
      if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
        Config tmp;
        tmp.set(kSeedEnvVar, env);
        seed = tmp.get_int(kSeedEnvVar, 0);
      }
    }
    if (!seed && config.contains("seed")) seed = config.get_int("seed", 0);
    if (seed) {
      config.set("seed", std::to_string(*seed));
      config.set("train.seed", std::to_string(*seed));
    }
  }

  train::TrainConfig train_config() const { return train::TrainConfig::from_config(config); }

  pipeline::FlowSettings flow(const std::string& method_flag) const {
    pipeline::FlowSettings f;
    f.method = fgplg::parse_flow_method(method_flag.empty() ? config.get_string("flow.method", "oracle")
                                                            : method_flag);
    f.block.search_radius = static_cast<int>(config.get_int("flow.search_radius", f.block.search_radius));
    f.block.patch_radius = static_cast<int>(config.get_int("flow.patch_radius", f.block.patch_radius));
    return f;
  }

  metrics::MetricsConfig metrics_config() const {
    metrics::MetricsConfig m;
    m.beta_sq = config.get_double("metrics.beta_sq", m.beta_sq);
    m.num_thresholds = static_cast<int>(config.get_int("metrics.num_thresholds", m.num_thresholds));
    m.dense_thresholds = config.get_bool("metrics.dense_thresholds", false);
    const std::string avg = config.get_string("metrics.averaging", "pooled");
    require(avg == "pooled" || avg == "per_frame", "metrics.averaging must be pooled or per_frame");
    m.averaging = avg == "pooled" ? metrics::PrAveraging::pooled : metrics::PrAveraging::per_frame;
    m.validate();
    return m;
  }
};

data::SynthSpec synth_spec(const Config& c) {
  data::SynthSpec s;
  s.num_videos = static_cast<int>(c.get_int("synth.videos", s.num_videos));
  s.frames_per_video = static_cast<int>(c.get_int("synth.frames", s.frames_per_video));
  s.height = static_cast<int>(c.get_int("synth.height", s.height));
  s.width = static_cast<int>(c.get_int("synth.width", s.width));
  s.motion = data::parse_motion_model(c.get_string("synth.motion", data::to_string(s.motion)));
  s.max_speed = static_cast<int>(c.get_int("synth.max_speed", s.max_speed));
  s.integer_velocity = c.get_bool("synth.integer_velocity", s.integer_velocity);
  s.distractor = c.get_bool("synth.distractor", s.distractor);
  s.min_half_size = static_cast<int>(c.get_int("synth.min_half_size", s.min_half_size));
  s.max_half_size = static_cast<int>(c.get_int("synth.max_half_size", s.max_half_size));
  if (c.contains("synth.contrast")) {
    s.contrast_levels.clear();
    for (const auto& v : split_list(c.get_string("synth.contrast", ""))) {
      Config tmp;
      tmp.set("synth.contrast", v);
      s.contrast_levels.push_back(tmp.get_double("synth.contrast", 1));
    }
  }
  if (c.contains("synth.shapes")) {
    s.shape_kinds.clear();
    for (const auto& v : split_list(c.get_string("synth.shapes", ""))) s.shape_kinds.push_back(data::parse_shape_kind(v));
  }
  s.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
  return s;
}

void require_kind(const train::Checkpoint& c, const std::string& kind, const std::string& path) {
  require(c.kind == kind, path + " holds a '" + c.kind + "' checkpoint, expected '" + kind + "'");
}

// Parameter names and shapes must match what the current configuration builds.
void require_compatible(const nn::ParamRegistry& loaded, const nn::ParamRegistry& expected, const std::string& what) {
  for (const auto& [name, p] : expected) {
    require(loaded.contains(name), what + " lacks parameter " + name);
    require(loaded.get(name).shape() == p.shape(), what + ": parameter " + name + " has shape " +
                                                       shape_str(loaded.get(name).shape()) + ", expected " +
                                                       shape_str(p.shape()));
  }
  require(loaded.size() == expected.size(), what + " has parameters the configuration does not use");
}

void write_log(const std::string& path, const std::vector<train::LossRecord>& losses) {
  if (!path.empty()) data::write_text(path, train::loss_csv(losses));
}

void report_final_loss(std::ostream& out, const std::string& stage, const std::vector<train::LossRecord>& losses) {
  if (losses.empty()) return;
  out << stage << ": " << losses.size() << " steps, final loss " << losses.back().loss << "\n";
}

struct EvalInputs {
  std::string data, split = "test", model, pred;
  int clip_len = 0;
};

// Predictions and ground truth for every frame with a mask.
struct EvalSet {
  std::vector<std::string> videos;
  std::vector<std::vector<Tensor>> preds, gts;
};

EvalSet collect_predictions(const Context& ctx, const EvalInputs& in) {
  require(in.model.empty() != in.pred.empty(), "give exactly one of --model or --pred");
  train::TrainConfig cfg = ctx.train_config();
  if (in.clip_len > 0) cfg.clip_length = in.clip_len;
  const data::Dataset ds = data::load_dataset(in.data, in.split);
  std::optional<train::Checkpoint> ckpt;
  if (!in.model.empty()) ckpt = train::load_checkpoint(in.model);
  EvalSet set;
  for (const auto& video : ds.videos) {
    const auto gts = pipeline::all_masks(video, cfg.height, cfg.width);
    std::vector<Tensor> preds(video.num_frames());
    if (ckpt) {
      const auto frames = pipeline::load_frames(video, cfg.height, cfg.width);
      if (ckpt->kind == "video") {
        preds = pipeline::predict_video(model::VideoModel(cfg.model), ckpt->params, frames, cfg.clip_length);
      } else {
        require_kind(*ckpt, "rcrnet", in.model);
        const model::RcrNet net(cfg.model.rcrnet);
        nn::NoGradGuard guard;
        for (std::size_t i = 0; i < frames.size(); ++i) preds[i] = net.forward_single(ckpt->params, nn::Var(frames[i])).value();
      }
    } else {
      for (int i = 0; i < video.num_frames(); ++i)
        if (!gts[i].empty())
          preds[i] = pipeline::resize_image(data::read_gray(fs::path(in.pred) / video.name() / (video.frame_name(i) + ".png")),
                                            cfg.height, cfg.width);
    }
    set.videos.push_back(video.name());
    set.preds.emplace_back();
    set.gts.emplace_back();
    for (int i = 0; i < video.num_frames(); ++i) {
      if (gts[i].empty()) continue;
      set.preds.back().push_back(preds[i]);
      set.gts.back().push_back(gts[i]);
    }
    require(!set.gts.back().empty(), video.name() + " has no ground-truth masks to evaluate against");
  }
  return set;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised video salient object detection"};
  app.require_subcommand(1);
  Context ctx{"", std::nullopt, &out, &err, {}};
  long seed_value = 0;
  app.add_option("--config", ctx.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed_value, "random seed (overrides $VSOD_SEED and the config)");

  // synth
  std::string synth_out;
  int synth_videos = 0, synth_frames = 0, synth_train = -1;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
  synth->add_option("--out", synth_out, "dataset root")->required();
  synth->add_option("--videos", synth_videos, "number of videos");
  synth->add_option("--frames", synth_frames, "frames per video");
  synth->add_option("--train-videos", synth_train, "videos in the train split (rest go to test)");

  // pretrain
  std::string data_root, split = "train", out_path, init_path, log_path, flow_flag, model_path, plan_dir, pred_dir;
  int interval = 0, per_interval = -1, steps = -1, clip_len = 0;
  auto* pretrain = app.add_subcommand("pretrain", "train the spatial network on sparse ground truth");
  pretrain->add_option("--data", data_root)->required();
  pretrain->add_option("--split", split);
  pretrain->add_option("--interval", interval, "annotation interval l");
  pretrain->add_option("--steps", steps);
  pretrain->add_option("--out", out_path, "checkpoint to write")->required();
  pretrain->add_option("--log", log_path, "loss CSV");

  auto* train_gen = app.add_subcommand("train-fgplg", "fine-tune the pseudo-label generator");
  train_gen->add_option("--data", data_root)->required();
  train_gen->add_option("--split", split);
  train_gen->add_option("--init", init_path, "pretrained spatial checkpoint")->required();
  train_gen->add_option("--interval", interval);
  train_gen->add_option("--flow", flow_flag, "oracle or block_matching");
  train_gen->add_option("--steps", steps);
  train_gen->add_option("--out", out_path)->required();
  train_gen->add_option("--log", log_path);

  auto* gen = app.add_subcommand("gen-pseudo", "write pseudo-labels and per-video plan manifests");
  gen->add_option("--data", data_root)->required();
  gen->add_option("--split", split);
  gen->add_option("--model", model_path, "generator checkpoint (needed when --per-interval > 0)");
  gen->add_option("--interval", interval);
  gen->add_option("--per-interval", per_interval);
  gen->add_option("--flow", flow_flag);
  gen->add_option("--out", out_path, "output directory")->required();

  auto* train_video = app.add_subcommand("train", "jointly train the spatial network and temporal module");
  train_video->add_option("--data", data_root)->required();
  train_video->add_option("--split", split);
  train_video->add_option("--plan", plan_dir, "directory written by gen-pseudo")->required();
  train_video->add_option("--init", init_path, "pretrained spatial checkpoint")->required();
  train_video->add_option("--clip-len", clip_len);
  train_video->add_option("--steps", steps);
  train_video->add_option("--out", out_path)->required();
  train_video->add_option("--log", log_path);

  EvalInputs eval_in;
  std::string metric_list = "maxF,S,J,boundaryF";
  auto add_eval_inputs = [&](CLI::App* cmd) {
    cmd->add_option("--data", eval_in.data)->required();
    cmd->add_option("--split", eval_in.split);
    cmd->add_option("--model", eval_in.model, "spatial or video checkpoint");
    cmd->add_option("--pred", eval_in.pred, "directory of <video>/<frame>.png saliency maps");
    cmd->add_option("--clip-len", eval_in.clip_len);
  };
  auto* predict = app.add_subcommand("predict", "write saliency maps for a split");
  add_eval_inputs(predict);
  predict->add_option("--out", out_path)->required();
  bool per_frame = false;
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  add_eval_inputs(eval);
  eval->add_option("--metrics", metric_list, "comma list of maxF,S,J,boundaryF");
  eval->add_flag("--per-frame", per_frame, "frame-averaged PR curve for maxF");
  eval->add_option("--out", out_path, "report file (default: stdout)");
  auto* plot = app.add_subcommand("plot-pr", "write the pooled precision-recall curve");
  add_eval_inputs(plot);
  plot->add_option("--out", out_path, "CSV file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*seed_opt) ctx.seed_flag = seed_value;
    ctx.load();
    Config& c = ctx.config;
    if (interval > 0) c.set("train.interval", std::to_string(interval));
    if (per_interval >= 0) c.set("train.per_interval", std::to_string(per_interval));
    if (clip_len > 0) c.set("train.clip_length", std::to_string(clip_len));

    if (synth->parsed()) {
      if (synth_videos > 0) c.set("synth.videos", std::to_string(synth_videos));
      if (synth_frames > 0) c.set("synth.frames", std::to_string(synth_frames));
      const data::SynthSpec spec = synth_spec(c);
      const int train_videos = synth_train >= 0 ? synth_train
                                                : static_cast<int>(c.get_int("synth.train_videos", spec.num_videos * 3 / 4));
      data::write_synth_dataset(synth_out, spec, train_videos);
      out << "synth: " << spec.num_videos << " videos written to " << synth_out << "\n";
    } else if (pretrain->parsed()) {
      if (steps >= 0) c.set("train.pretrain_steps", std::to_string(steps));
      const train::TrainConfig cfg = ctx.train_config();
      const data::Dataset ds = data::load_dataset(data_root, split);
      std::vector<train::LabeledImage> stills;
      for (const auto& video : ds.videos) {
        const auto frames = pipeline::load_frames(video, cfg.height, cfg.width);
        const auto more = pipeline::labeled_stills(frames, pipeline::sparse_gt(video, cfg.schedule.interval, cfg.height, cfg.width));
        stills.insert(stills.end(), more.begin(), more.end());
      }
      const auto result = train::pretrain_rcrnet(stills, cfg);
      train::save_checkpoint(out_path, result.checkpoint);
      write_log(log_path, result.losses);
      report_final_loss(out, "pretrain", result.losses);
    } else if (train_gen->parsed()) {
      if (steps >= 0) c.set("train.fgplg_steps", std::to_string(steps));
      const train::TrainConfig cfg = ctx.train_config();
      const train::Checkpoint init = train::load_checkpoint(init_path);
      require_kind(init, "rcrnet", init_path);
      nn::Rng probe(0);
      require_compatible(init.params, model::RcrNet(cfg.model.rcrnet).init_params(probe), init_path);
      const auto flow = ctx.flow(flow_flag);
      const data::Dataset ds = data::load_dataset(data_root, split);
      std::vector<train::LabeledImage> samples;
      for (const auto& video : ds.videos) {
        const auto frames = pipeline::load_frames(video, cfg.height, cfg.width);
        const auto gt = pipeline::sparse_gt(video, cfg.schedule.interval, cfg.height, cfg.width);
        const auto more = pipeline::generator_samples(video, frames, gt, cfg.schedule.interval, flow);
        samples.insert(samples.end(), more.begin(), more.end());
      }
      const auto result = train::train_fgplg(samples, cfg, init.params);
      train::save_checkpoint(out_path, result.checkpoint);
      write_log(log_path, result.losses);
      report_final_loss(out, "fgplg", result.losses);
    } else if (gen->parsed()) {
      const train::TrainConfig cfg = ctx.train_config();
      const auto flow = ctx.flow(flow_flag);
      std::optional<train::Checkpoint> generator;
      const model::RcrNet net(fgplg::generator_config(cfg.model.rcrnet));
      if (cfg.schedule.per_interval > 0) {
        require(!model_path.empty(), "gen-pseudo with --per-interval > 0 needs --model");
        generator = train::load_checkpoint(model_path);
        require_kind(*generator, "fgplg", model_path);
      }
      const data::Dataset ds = data::load_dataset(data_root, split);
      int gt_count = 0, pseudo_count = 0, total = 0;
      for (const auto& video : ds.videos) {
        const auto plan = fgplg::build_pseudo_schedule(video.num_frames(), cfg.schedule);
        std::vector<Tensor> pseudo(video.num_frames());
        if (generator) {
          const auto frames = pipeline::load_frames(video, cfg.height, cfg.width);
          const auto gt = pipeline::sparse_gt(video, cfg.schedule.interval, cfg.height, cfg.width);
          pseudo = pipeline::generate_pseudo_labels(video, frames, gt, plan, net, generator->params, flow);
        }
        pipeline::write_plan(fs::path(out_path) / video.name(), video, plan, pseudo);
        for (const auto& e : plan) {
          gt_count += e.kind == data::LabelKind::gt;
          pseudo_count += e.kind == data::LabelKind::pseudo;
        }
        total += video.num_frames();
      }
      out << "gen-pseudo: " << total << " frames, " << gt_count << " gt, " << pseudo_count << " pseudo\n";
    } else if (train_video->parsed()) {
      if (steps >= 0) c.set("train.video_steps", std::to_string(steps));
      const train::TrainConfig cfg = ctx.train_config();
      const train::Checkpoint init = train::load_checkpoint(init_path);
      require_kind(init, "rcrnet", init_path);
      nn::Rng probe(0);
      require_compatible(init.params, model::RcrNet(cfg.model.rcrnet).init_params(probe), init_path);
      const data::Dataset ds = data::load_dataset(data_root, split);
      std::vector<train::VideoSample> videos;
      for (const auto& video : ds.videos) {
        auto labels = pipeline::read_plan(fs::path(plan_dir) / video.name() / "manifest.txt", video.num_frames(),
                                          cfg.height, cfg.width);
        videos.push_back({video.name(), pipeline::load_frames(video, cfg.height, cfg.width), std::move(labels.labels),
                          std::move(labels.kinds)});
      }
      const auto result = train::train_video_model(videos, cfg, init.params);
      train::save_checkpoint(out_path, result.checkpoint);
      write_log(log_path, result.losses);
      report_final_loss(out, "train", result.losses);
    } else if (predict->parsed()) {
      require(!eval_in.model.empty(), "predict needs --model");
      const train::TrainConfig cfg = ctx.train_config();
      const data::Dataset ds = data::load_dataset(eval_in.data, eval_in.split);
      const train::Checkpoint ckpt = train::load_checkpoint(eval_in.model);
      for (const auto& video : ds.videos) {
        const auto frames = pipeline::load_frames(video, cfg.height, cfg.width);
        std::vector<Tensor> maps;
        if (ckpt.kind == "video") {
          maps = pipeline::predict_video(model::VideoModel(cfg.model), ckpt.params, frames, cfg.clip_length);
        } else {
          require_kind(ckpt, "rcrnet", eval_in.model);
          const model::RcrNet net(cfg.model.rcrnet);
          nn::NoGradGuard guard;
          for (const auto& f : frames) maps.push_back(net.forward_single(ckpt.params, nn::Var(f)).value());
        }
        std::vector<std::string> names;
        for (int i = 0; i < video.num_frames(); ++i) names.push_back(video.frame_name(i));
        data::save_outputs(maps, names, fs::path(out_path) / video.name());
      }
      out << "predict: " << ds.videos.size() << " videos written to " << out_path << "\n";
    } else if (eval->parsed() || plot->parsed()) {
      if (eval->parsed() && per_frame) c.set("metrics.averaging", "per_frame");
      const metrics::MetricsConfig mcfg = ctx.metrics_config();
      const EvalSet set = collect_predictions(ctx, eval_in);
      std::vector<Tensor> all_preds, all_gts;
      for (std::size_t v = 0; v < set.videos.size(); ++v) {
        all_preds.insert(all_preds.end(), set.preds[v].begin(), set.preds[v].end());
        all_gts.insert(all_gts.end(), set.gts[v].begin(), set.gts[v].end());
      }
      if (plot->parsed()) {
        data::write_text(out_path, metrics::format_pr_csv(metrics::pr_curve(all_preds, all_gts, mcfg)));
        out << "plot-pr: curve written to " << out_path << "\n";
      } else {
        const auto keys = split_list(metric_list);
        require(!keys.empty(), "--metrics lists no metrics");
        std::vector<metrics::VideoScores> per_video;
        for (std::size_t v = 0; v < set.videos.size(); ++v)
          per_video.push_back({set.videos[v], metrics::evaluate(set.preds[v], set.gts[v], mcfg)});
        const std::string report = metrics::format_report(metrics::evaluate(all_preds, all_gts, mcfg), per_video, keys);
        if (out_path.empty())
          out << report;
        else
          data::write_text(out_path, report);
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vsod
