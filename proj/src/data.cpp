#include "vsod/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace vsod::data {

// ---------------------------------------------------------------- image I/O

std::uint8_t quantize(double s) {
  const double v = std::floor(255.0 * s + 0.5);
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

namespace {

cv::Mat read_image(const fs::path& path, int flags) {
  require(fs::exists(path), "missing image " + path.string());
  cv::Mat img = cv::imread(path.string(), flags);
  require(!img.empty(), "cannot decode image " + path.string());
  require(img.depth() == CV_8U, "expected an 8-bit image: " + path.string());
  return img;
}

void write_image(const fs::path& path, const cv::Mat& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), img);
  } catch (const cv::Exception&) {
    ok = false;
  }
  require(ok, "cannot write image " + path.string());
}

Tensor gray_to_tensor(const cv::Mat& img) {
  Tensor out({1, img.rows, img.cols});
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) out[y * img.cols + x] = img.at<std::uint8_t>(y, x) / 255.0;
  return out;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

Tensor read_rgb(const fs::path& path) {
  const cv::Mat img = read_image(path, cv::IMREAD_COLOR);
  Tensor out({3, img.rows, img.cols});
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) {
      const auto& px = img.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = px[2 - c] / 255.0;  // BGR on disk
    }
  return out;
}

Tensor read_gray(const fs::path& path) { return gray_to_tensor(read_image(path, cv::IMREAD_GRAYSCALE)); }

Tensor read_mask(const fs::path& path) {
  const cv::Mat img = read_image(path, cv::IMREAD_GRAYSCALE);
  Tensor out({1, img.rows, img.cols});
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) out[y * img.cols + x] = img.at<std::uint8_t>(y, x) >= 128 ? 1 : 0;
  return out;
}

void write_rgb(const fs::path& path, const Tensor& image) {
  require(image.rank() == 3 && image.dim(0) == 3, "write_rgb expects [3,H,W], got " + shape_str(image.shape()));
  cv::Mat img(image.dim(1), image.dim(2), CV_8UC3);
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x)
      for (int c = 0; c < 3; ++c) img.at<cv::Vec3b>(y, x)[2 - c] = quantize(image.at(c, y, x));
  write_image(path, img);
}

void write_gray(const fs::path& path, const Tensor& map) {
  require(map.rank() == 3 && map.dim(0) == 1, "write_gray expects [1,H,W], got " + shape_str(map.shape()));
  cv::Mat img(map.dim(1), map.dim(2), CV_8UC1);
  for (int y = 0; y < img.rows; ++y)
    for (int x = 0; x < img.cols; ++x) img.at<std::uint8_t>(y, x) = quantize(map[y * img.cols + x]);
  write_image(path, img);
}

void save_outputs(const std::vector<Tensor>& maps, const std::vector<std::string>& names,
                  const fs::path& dir) {
  require(maps.size() == names.size(), "save_outputs: map and name counts differ");
  for (std::size_t i = 0; i < maps.size(); ++i) write_gray(dir / (names[i] + ".png"), maps[i]);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  require(static_cast<bool>(out), "cannot write " + path.string());
}

// ------------------------------------------------------------ synthetic data

ShapeKind parse_shape_kind(const std::string& s) {
  if (s == "disk") return ShapeKind::disk;
  if (s == "rectangle") return ShapeKind::rectangle;
  throw Error("unknown shape kind '" + s + "' (expected disk or rectangle)");
}

MotionModel parse_motion_model(const std::string& s) {
  if (s == "constant_velocity") return MotionModel::constant_velocity;
  if (s == "sinusoidal") return MotionModel::sinusoidal;
  throw Error("unknown motion model '" + s + "' (expected constant_velocity or sinusoidal)");
}

std::string to_string(ShapeKind k) { return k == ShapeKind::disk ? "disk" : "rectangle"; }
std::string to_string(MotionModel m) {
  return m == MotionModel::constant_velocity ? "constant_velocity" : "sinusoidal";
}

bool ShapeGeometry::contains(double cx, double cy, int x, int y) const {
  const double dx = x - cx, dy = y - cy;
  if (kind == ShapeKind::disk) return dx * dx + dy * dy <= half_w * half_w;
  return std::abs(dx) <= half_w && std::abs(dy) <= half_h;
}

namespace {

void require_inside(const ShapeGeometry& g, double cx, double cy, int H, int W, const std::string& what) {
  const double hh = g.kind == ShapeKind::disk ? g.half_w : g.half_h;
  require(cx - g.half_w >= 1 && cx + g.half_w <= W - 2 && cy - hh >= 1 && cy + hh <= H - 2,
          what + " leaves the one-pixel border margin");
}

}  // namespace

void SceneTrack::validate() const {
  require(height > 0 && width > 0, "scene size must be positive");
  require(!positions.empty(), "scene has no frames");
  require(salient.half_w > 0 && salient.half_h > 0, "salient shape must have positive size");
  for (std::size_t t = 0; t < positions.size(); ++t)
    require_inside(salient, positions[t][0], positions[t][1], height, width,
                   "salient shape at frame " + std::to_string(t));
  if (distractor)
    require_inside(*distractor, distractor_position[0], distractor_position[1], height, width,
                   "distractor");
}

Tensor SceneTrack::salient_mask(int frame) const {
  require(frame >= 0 && frame < num_frames(), "frame index out of range");
  Tensor m({1, height, width});
  const auto [cx, cy] = positions[frame];
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) m[y * width + x] = salient.contains(cx, cy, x, y) ? 1 : 0;
  return m;
}

Tensor SceneTrack::flow(int source, int target) const {
  require(source >= 0 && source < num_frames() && target >= 0 && target < num_frames(),
          "flow frame index out of range");
  const auto [sx, sy] = positions[source];
  const auto [tx, ty] = positions[target];
  const double u = sx - tx, v = sy - ty;
  Tensor f({2, height, width});
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      // Object pixels and pixels the object uncovers follow the object; the rest is static.
      if (salient.contains(tx, ty, x, y) || salient.contains(sx, sy, x, y)) {
        f[y * width + x] = u;
        f[plane + y * width + x] = v;
      }
    }
  return f;
}

std::string SceneTrack::serialize() const {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "size %d %d\n", height, width);
  out += line;
  std::snprintf(line, sizeof line, "salient %s %.17g %.17g\n", to_string(salient.kind).c_str(),
                salient.half_w, salient.half_h);
  out += line;
  if (distractor) {
    std::snprintf(line, sizeof line, "distractor %s %.17g %.17g %.17g %.17g\n",
                  to_string(distractor->kind).c_str(), distractor->half_w, distractor->half_h,
                  distractor_position[0], distractor_position[1]);
    out += line;
  }
  for (std::size_t t = 0; t < positions.size(); ++t) {
    std::snprintf(line, sizeof line, "frame %zu %.17g %.17g\n", t, positions[t][0], positions[t][1]);
    out += line;
  }
  return out;
}

SceneTrack SceneTrack::parse(const std::string& text, const std::string& origin) {
  SceneTrack track;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (tag == "size") {
      ls >> track.height >> track.width;
    } else if (tag == "salient") {
      std::string kind;
      ls >> kind >> track.salient.half_w >> track.salient.half_h;
      track.salient.kind = parse_shape_kind(kind);
    } else if (tag == "distractor") {
      std::string kind;
      ShapeGeometry g;
      ls >> kind >> g.half_w >> g.half_h >> track.distractor_position[0] >> track.distractor_position[1];
      g.kind = parse_shape_kind(kind);
      track.distractor = g;
    } else if (tag == "frame") {
      std::size_t t = 0;
      std::array<double, 2> p{};
      ls >> t >> p[0] >> p[1];
      require(t == track.positions.size(), where + ": frames must be listed in order");
      track.positions.push_back(p);
    } else {
      throw Error(where + ": unknown record '" + tag + "'");
    }
    require(!ls.fail(), where + ": malformed record");
  }
  track.validate();
  return track;
}

void SynthSpec::validate() const {
  require(num_videos >= 1 && frames_per_video >= 1, "synth: need at least one video and one frame");
  require(height > 0 && width > 0 && height % 16 == 0 && width % 16 == 0,
          "synth: height and width must be positive multiples of 16");
  require(!shape_kinds.empty(), "synth: no shape kinds");
  require(!contrast_levels.empty(), "synth: no contrast levels");
  for (double c : contrast_levels) require(c > 0 && c <= 1, "synth: contrast levels must lie in (0,1]");
  require(max_speed >= 0, "synth: max_speed must be non-negative");
  require(min_half_size >= 1 && min_half_size <= max_half_size, "synth: invalid shape size range");
  require(2 * max_half_size + 3 <= std::min(height, width),
          "synth: shapes of half size " + std::to_string(max_half_size) +
              " would leave the border of a " + std::to_string(height) + "x" +
              std::to_string(width) + " frame");
}

namespace {

using Color = std::array<double, 3>;

double q8(double v) { return quantize(v) / 255.0; }

Color hue_color(double h) {
  const double r = std::clamp(std::abs(h * 6 - 3) - 1, 0.0, 1.0);
  const double g = std::clamp(2 - std::abs(h * 6 - 2), 0.0, 1.0);
  const double b = std::clamp(2 - std::abs(h * 6 - 4), 0.0, 1.0);
  return {r, g, b};
}

constexpr int kCell = 4;

// Cell texture anchored to an object's top-left corner.
struct Texture {
  int cols = 0;
  std::vector<Color> cells;

  Color at(int lx, int ly) const { return cells[(ly / kCell) * cols + lx / kCell]; }
};

Texture make_texture(int w, int h, std::mt19937_64& rng, auto&& color_fn) {
  Texture t;
  t.cols = w / kCell + 1;
  const int rows = h / kCell + 1;
  for (int i = 0; i < t.cols * rows; ++i) t.cells.push_back(color_fn(rng));
  return t;
}

}  // namespace

SynthClip render_scene(const SceneTrack& track, double contrast, std::uint64_t texture_seed,
                       const std::string& name) {
  track.validate();
  require(contrast > 0 && contrast <= 1, "contrast must lie in (0,1]");
  std::mt19937_64 rng(mix(texture_seed));
  std::uniform_real_distribution<double> u(0, 1);
  const int H = track.height, W = track.width;

  const Texture background = make_texture(W, H, rng, [&](std::mt19937_64&) {
    const double g = 0.35 + 0.3 * u(rng);
    return Color{q8(g + 0.02 * (u(rng) - 0.5)), q8(g + 0.02 * (u(rng) - 0.5)), q8(g)};
  });
  const Color base = hue_color(u(rng));
  const int sw = static_cast<int>(2 * track.salient.half_w) + 2;
  const int sh = static_cast<int>(2 * track.salient.half_h) + 2;
  const Texture salient = make_texture(sw, sh, rng, [&](std::mt19937_64&) {
    Color c;
    for (int k = 0; k < 3; ++k)
      c[k] = q8(0.5 + 0.7 * contrast * (base[k] - 0.5) + 0.3 * (u(rng) - 0.5));
    return c;
  });
  Texture distractor;
  if (track.distractor) {
    const int dw = static_cast<int>(2 * track.distractor->half_w) + 2;
    const int dh = static_cast<int>(2 * track.distractor->half_h) + 2;
    distractor = make_texture(dw, dh, rng, [&](std::mt19937_64&) {
      const double g = q8(0.15 + 0.7 * u(rng));
      return Color{g, g, g};
    });
  }

  SynthClip clip;
  clip.name = name;
  clip.track = track;
  for (int t = 0; t < track.num_frames(); ++t) {
    Tensor frame({3, H, W});
    const auto [cx, cy] = track.positions[t];
    const int ox = static_cast<int>(std::floor(cx - track.salient.half_w));
    const int oy = static_cast<int>(std::floor(cy - track.salient.half_h));
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        Color c = background.at(x, y);
        if (track.distractor) {
          const auto [dx, dy] = track.distractor_position;
          if (track.distractor->contains(dx, dy, x, y)) {
            const int lx = x - static_cast<int>(std::floor(dx - track.distractor->half_w));
            const int ly = y - static_cast<int>(std::floor(dy - track.distractor->half_h));
            c = distractor.at(lx, ly);
          }
        }
        if (track.salient.contains(cx, cy, x, y)) c = salient.at(x - ox, y - oy);
        for (int k = 0; k < 3; ++k) frame.at(k, y, x) = c[k];
      }
    clip.frames.push_back(std::move(frame));
    clip.masks.push_back(track.salient_mask(t));
  }
  return clip;
}

std::vector<Tensor> SynthClip::consecutive_flows() const {
  std::vector<Tensor> flows;
  for (int t = 0; t + 1 < track.num_frames(); ++t) flows.push_back(track.flow(t, t + 1));
  return flows;
}

SynthClip synth_video(const SynthSpec& spec, int index) {
  spec.validate();
  require(index >= 0 && index < spec.num_videos, "synth_video: index out of range");
  std::mt19937_64 rng(mix(spec.seed ^ mix(static_cast<std::uint64_t>(index) + 1)));
  std::uniform_real_distribution<double> u(0, 1);
  auto uniform_int = [&](int lo, int hi) {
    return lo + static_cast<int>(std::floor(u(rng) * (hi - lo + 1)));
  };
  const int H = spec.height, W = spec.width, F = spec.frames_per_video;

  SceneTrack track;
  track.height = H;
  track.width = W;
  track.salient.kind = spec.shape_kinds[uniform_int(0, static_cast<int>(spec.shape_kinds.size()) - 1)];
  track.salient.half_w = uniform_int(spec.min_half_size, spec.max_half_size);
  track.salient.half_h = track.salient.kind == ShapeKind::disk
                             ? track.salient.half_w
                             : uniform_int(spec.min_half_size, spec.max_half_size);

  // Per axis: centre range keeping a one-pixel margin, then a motion that fits it.
  auto axis_path = [&](double half, int extent) {
    const double lo = 1 + half, hi = extent - 2 - half;
    const double slack = hi - lo;
    std::vector<double> path(F);
    if (spec.motion == MotionModel::constant_velocity) {
      double v = spec.integer_velocity ? uniform_int(-spec.max_speed, spec.max_speed)
                                       : spec.max_speed * (2 * u(rng) - 1);
      const double limit = F > 1 ? slack / (F - 1) : slack;
      if (std::abs(v) > limit) v = std::copysign(spec.integer_velocity ? std::floor(limit) : limit, v);
      const double span = std::abs(v) * (F - 1);
      double start = lo + u(rng) * (slack - span);
      if (spec.integer_velocity) start = std::floor(start);
      if (v < 0) start += span;
      for (int t = 0; t < F; ++t) path[t] = start + v * t;
    } else {
      const double amp = std::min(slack / 2, spec.max_speed * 3.0) * u(rng);
      const double period = 8 + 8 * u(rng), phase = 2 * std::numbers::pi * u(rng);
      const double centre = std::floor(lo + slack / 2);
      for (int t = 0; t < F; ++t) {
        double p = centre + amp * std::sin(2 * std::numbers::pi * t / period + phase);
        if (spec.integer_velocity) p = std::round(p);
        path[t] = std::clamp(p, lo, hi);
      }
    }
    return path;
  };
  const double half_y = track.salient.kind == ShapeKind::disk ? track.salient.half_w : track.salient.half_h;
  const auto xs = axis_path(track.salient.half_w, W);
  const auto ys = axis_path(half_y, H);
  for (int t = 0; t < F; ++t) track.positions.push_back({xs[t], ys[t]});

  if (spec.distractor) {
    ShapeGeometry d;
    d.kind = spec.shape_kinds[uniform_int(0, static_cast<int>(spec.shape_kinds.size()) - 1)];
    d.half_w = uniform_int(spec.min_half_size, spec.max_half_size);
    d.half_h = d.kind == ShapeKind::disk ? d.half_w : uniform_int(spec.min_half_size, spec.max_half_size);
    const double dh = d.kind == ShapeKind::disk ? d.half_w : d.half_h;
    track.distractor_position = {static_cast<double>(uniform_int(1 + static_cast<int>(d.half_w),
                                                                 W - 2 - static_cast<int>(d.half_w))),
                                 static_cast<double>(uniform_int(1 + static_cast<int>(dh),
                                                                 H - 2 - static_cast<int>(dh)))};
    track.distractor = d;
  }
  const double contrast =
      spec.contrast_levels[uniform_int(0, static_cast<int>(spec.contrast_levels.size()) - 1)];
  char name[32];
  std::snprintf(name, sizeof name, "video%03d", index);
  return render_scene(track, contrast, rng(), name);
}

// ---------------------------------------------------------------- dataset

std::string frame_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05d", index);
  return buf;
}

Video::Video(std::string name, fs::path dir) : name_(std::move(name)), dir_(std::move(dir)) {
  const fs::path frames = dir_ / "frames";
  require(fs::is_directory(frames), "missing frames directory " + frames.string());
  for (const auto& entry : fs::directory_iterator(frames))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      frame_names_.push_back(entry.path().stem().string());
  std::sort(frame_names_.begin(), frame_names_.end());
  require(!frame_names_.empty(), "no frames in " + frames.string());
  for (const auto& stem : frame_names_) has_mask_.push_back(fs::exists(dir_ / "masks" / (stem + ".png")));
  const fs::path track_file = dir_ / "track.txt";
  if (fs::exists(track_file)) {
    track_ = SceneTrack::parse(read_text(track_file), track_file.string());
    require(track_->num_frames() == num_frames(),
            track_file.string() + " lists " + std::to_string(track_->num_frames()) +
                " frames but the video has " + std::to_string(num_frames()));
  }
}

const std::string& Video::frame_name(int i) const {
  require(i >= 0 && i < num_frames(), name_ + ": frame index " + std::to_string(i) + " out of range");
  return frame_names_[i];
}

bool Video::has_mask(int i) const {
  frame_name(i);
  return has_mask_[i];
}

fs::path Video::frame_path(int i) const { return dir_ / "frames" / (frame_name(i) + ".png"); }
fs::path Video::mask_path(int i) const { return dir_ / "masks" / (frame_name(i) + ".png"); }

Tensor Video::load_frame(int i) const { return read_rgb(frame_path(i)); }

Tensor Video::load_mask(int i) const {
  const fs::path p = mask_path(i);
  require(has_mask(i), "missing mask " + p.string());
  return read_mask(p);
}

const Video& Dataset::find(const std::string& name) const {
  for (const auto& v : videos)
    if (v.name() == name) return v;
  throw Error("video '" + name + "' not in split " + split);
}

Dataset load_dataset(const fs::path& root, const std::string& split) {
  const fs::path split_file = root / "splits" / (split + ".txt");
  std::istringstream in(read_text(split_file));
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line.erase(std::remove_if(line.begin(), line.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }),
               line.end());
    if (!line.empty()) names.push_back(line);
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  require(!names.empty(), "split file " + split_file.string() + " lists no videos");
  Dataset ds{root, split, {}};
  for (const auto& n : names) ds.videos.emplace_back(n, root / n);
  return ds;
}

void write_synth_dataset(const fs::path& root, const SynthSpec& spec, int train_videos) {
  spec.validate();
  require(train_videos >= 0 && train_videos <= spec.num_videos,
          "train video count must lie in [0, num_videos]");
  std::string train, test, all;
  for (int v = 0; v < spec.num_videos; ++v) {
    const SynthClip clip = synth_video(spec, v);
    const fs::path dir = root / clip.name;
    for (int t = 0; t < static_cast<int>(clip.frames.size()); ++t) {
      write_rgb(dir / "frames" / (frame_stem(t) + ".png"), clip.frames[t]);
      write_gray(dir / "masks" / (frame_stem(t) + ".png"), clip.masks[t]);
    }
    write_text(dir / "track.txt", clip.track.serialize());
    (v < train_videos ? train : test) += clip.name + "\n";
    all += clip.name + "\n";
  }
  write_text(root / "splits" / "train.txt", train);
  write_text(root / "splits" / "test.txt", test);
  write_text(root / "splits" / "all.txt", all);
}

// -------------------------------------------------------------- plan manifest

std::string to_string(LabelKind k) {
  switch (k) {
    case LabelKind::gt: return "gt";
    case LabelKind::pseudo: return "pseudo";
    case LabelKind::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

LabelKind parse_label_kind(const std::string& s) {
  if (s == "gt") return LabelKind::gt;
  if (s == "pseudo") return LabelKind::pseudo;
  if (s == "unlabeled") return LabelKind::unlabeled;
  throw Error("unknown label kind '" + s + "'");
}

void write_manifest(const fs::path& file, const std::vector<ManifestEntry>& entries) {
  std::string text;
  for (const auto& e : entries)
    text += std::to_string(e.index) + " " + to_string(e.kind) + " " + (e.path.empty() ? "-" : e.path) + "\n";
  write_text(file, text);
}

std::vector<ManifestEntry> read_manifest(const fs::path& file) {
  std::istringstream in(read_text(file));
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string kind, path;
    ls >> e.index >> kind >> path;
    require(!ls.fail(), file.string() + ":" + std::to_string(lineno) + ": malformed manifest line");
    e.kind = parse_label_kind(kind);
    e.path = path == "-" ? "" : path;
    require(e.kind == LabelKind::unlabeled || !e.path.empty(),
            file.string() + ":" + std::to_string(lineno) + ": labeled entry without a path");
    out.push_back(e);
  }
  return out;
}

}  // namespace vsod::data
