#pragma once

#include <string>
#include <vector>

#include "vsod/rcrnet.hpp"

namespace vsod::model {

/// Submodule switches; the named variants follow the ablation R_a..R_e.
struct NerConfig {
  enum class Depth { single, deep };

  bool enable_first_nonlocal = true;
  bool enable_dbconvgru = true;
  bool enable_second_nonlocal = true;
  Depth bidirectional_depth = Depth::deep;
  bool gru_bias = false;

  /// 'a' none, 'b' first non-local, 'c' + DB-ConvGRU, 'd' both non-locals + forward
  /// ConvGRU, 'e' full module.
  static NerConfig variant(char name);
};

enum class Direction { forward, backward };

/// Embedded-Gaussian non-local block over all T*h*w positions of x [T,C,h,w].
/// Channel reduction 2; output projection starts at zero.
void init_nonlocal(ParamRegistry& params, const std::string& prefix, int channels, Rng& rng);
Var nonlocal_block(const Var& x, const ParamRegistry& params, const std::string& prefix);

/// Six 3x3 kernels xz, hz, xr, hr, xh, hh (prefix.<name>.weight, optional .bias).
void init_convgru(ParamRegistry& params, const std::string& prefix, int in_channels,
                  int hidden_channels, bool bias, Rng& rng);
Var convgru_cell(const Var& x_t, const Var& h_prev, const ParamRegistry& params,
                 const std::string& prefix);
/// Hidden states [T,C',h,w] in original time order; initial state zero.
Var convgru_forward(const Var& seq, Direction direction, const ParamRegistry& params,
                    const std::string& prefix);

/// prefix.forward, prefix.backward (consumes the forward states), prefix.fuse_f, prefix.fuse_b.
void init_db_convgru(ParamRegistry& params, const std::string& prefix, int channels, bool bias,
                     Rng& rng);
Var db_convgru(const Var& seq, const ParamRegistry& params, const std::string& prefix);

class NerModule {
 public:
  NerModule(NerConfig cfg, int channels);

  const NerConfig& config() const noexcept { return cfg_; }
  void init_params(ParamRegistry& params, Rng& rng) const;
  /// Enabled submodules in fixed order; disabled ones are identity.
  Var forward(const ParamRegistry& params, const Var& clip_features) const;

 private:
  NerConfig cfg_;
  int channels_;
};

struct VideoModelConfig {
  RcrNetConfig rcrnet;
  NerConfig ner;
};

/// RCRNet with the temporal module between extractor and classifier.
class VideoModel {
 public:
  explicit VideoModel(VideoModelConfig cfg);

  const VideoModelConfig& config() const noexcept { return cfg_; }
  const RcrNet& rcrnet() const noexcept { return rcrnet_; }
  ParamRegistry init_params(Rng& rng) const;
  /// Adds the temporal parameters to an existing (pretrained) spatial registry.
  void init_temporal_params(ParamRegistry& params, Rng& rng) const;

  std::vector<Var> forward_logits(const ParamRegistry& params, const std::vector<Var>& frames) const;
  std::vector<Var> video_forward(const ParamRegistry& params, const std::vector<Var>& frames) const;

 private:
  VideoModelConfig cfg_;
  RcrNet rcrnet_;
  NerModule ner_;
};

}  // namespace vsod::model
