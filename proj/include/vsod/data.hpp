#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vsod/tensor.hpp"

namespace vsod::data {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- image I/O

/// 8-bit code of a saliency value: floor(255 * s + 0.5), clamped to [0,255].
std::uint8_t quantize(double s);

/// RGB image as [3,H,W] in [0,1].
Tensor read_rgb(const fs::path& path);
/// Single-channel image as [1,H,W] in [0,1] (value / 255).
Tensor read_gray(const fs::path& path);
/// Single-channel mask binarized with pixel >= 128 -> 1.
Tensor read_mask(const fs::path& path);
void write_rgb(const fs::path& path, const Tensor& image);
void write_gray(const fs::path& path, const Tensor& map);

/// Writes each [1,H,W] map as `<dir>/<name>.png`.
void save_outputs(const std::vector<Tensor>& maps, const std::vector<std::string>& names,
                  const fs::path& dir);

// ------------------------------------------------------------ synthetic data

enum class ShapeKind { disk, rectangle };
enum class MotionModel { constant_velocity, sinusoidal };

ShapeKind parse_shape_kind(const std::string& s);
MotionModel parse_motion_model(const std::string& s);
std::string to_string(ShapeKind k);
std::string to_string(MotionModel m);

struct ShapeGeometry {
  ShapeKind kind = ShapeKind::disk;
  double half_w = 8;  // radius for disks
  double half_h = 8;
  /// Pixel (x,y) lies inside the shape centred at (cx,cy); pixel centres are integers.
  bool contains(double cx, double cy, int x, int y) const;
};

/// Geometry of one synthetic video: one moving salient object, optionally one static
/// distractor. Positions are shape centres per frame, in pixels.
struct SceneTrack {
  int height = 0;
  int width = 0;
  ShapeGeometry salient;
  std::vector<std::array<double, 2>> positions;
  std::optional<ShapeGeometry> distractor;
  std::array<double, 2> distractor_position{0, 0};

  int num_frames() const { return static_cast<int>(positions.size()); }
  /// Rejects objects closer than one pixel to the border in any frame.
  void validate() const;
  Tensor salient_mask(int frame) const;
  /// Target->source flow [2,H,W] from frame `target` back to frame `source`.
  Tensor flow(int source, int target) const;

  std::string serialize() const;
  static SceneTrack parse(const std::string& text, const std::string& origin);
};

struct SynthSpec {
  int num_videos = 8;
  int frames_per_video = 24;
  int height = 64;
  int width = 64;
  std::vector<ShapeKind> shape_kinds{ShapeKind::disk, ShapeKind::rectangle};
  MotionModel motion = MotionModel::constant_velocity;
  int max_speed = 2;
  bool integer_velocity = true;
  bool distractor = true;
  std::vector<double> contrast_levels{0.8, 1.0};
  int min_half_size = 7;
  int max_half_size = 12;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthClip {
  std::string name;
  SceneTrack track;
  std::vector<Tensor> frames;  // [3,H,W]
  std::vector<Tensor> masks;   // [1,H,W] binary

  /// Flows between consecutive frames: element t maps frame t+1 (target) back to t.
  std::vector<Tensor> consecutive_flows() const;
};

/// Renders a scene; textures are drawn from `texture_seed`.
SynthClip render_scene(const SceneTrack& track, double contrast, std::uint64_t texture_seed,
                       const std::string& name = "scene");

/// Video `index` of the synthetic set described by `spec`.
SynthClip synth_video(const SynthSpec& spec, int index);

// ---------------------------------------------------------------- dataset

/// Video directory: frames/NNNNN.png, optional masks/NNNNN.png, optional track.txt.
class Video {
 public:
  Video(std::string name, fs::path dir);

  const std::string& name() const { return name_; }
  const fs::path& dir() const { return dir_; }
  int num_frames() const { return static_cast<int>(frame_names_.size()); }
  const std::string& frame_name(int i) const;
  bool has_mask(int i) const;
  fs::path frame_path(int i) const;
  fs::path mask_path(int i) const;
  Tensor load_frame(int i) const;
  /// Throws naming the path when the mask is missing.
  Tensor load_mask(int i) const;
  const std::optional<SceneTrack>& track() const { return track_; }

 private:
  std::string name_;
  fs::path dir_;
  std::vector<std::string> frame_names_;
  std::vector<bool> has_mask_;
  std::optional<SceneTrack> track_;
};

struct Dataset {
  fs::path root;
  std::string split;
  std::vector<Video> videos;  // sorted by name

  const Video& find(const std::string& name) const;
};

/// Reads `<root>/splits/<split>.txt` (one video name per line).
Dataset load_dataset(const fs::path& root, const std::string& split);

/// Writes a synthetic dataset: one directory per video plus splits train / test / all.
/// The first `train_videos` videos form the train split.
void write_synth_dataset(const fs::path& root, const SynthSpec& spec, int train_videos);

std::string frame_stem(int index);

// -------------------------------------------------------------- plan manifest

enum class LabelKind { gt, pseudo, unlabeled };
std::string to_string(LabelKind k);
LabelKind parse_label_kind(const std::string& s);

struct ManifestEntry {
  int index = 0;
  LabelKind kind = LabelKind::unlabeled;
  /// Relative to the manifest directory; empty for unlabeled frames.
  std::string path;
};

/// One line per frame: "index kind path" ("-" for no path).
void write_manifest(const fs::path& file, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const fs::path& file);

/// Text file helpers that surface the path on failure.
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace vsod::data
