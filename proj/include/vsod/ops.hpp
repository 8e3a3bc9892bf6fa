#pragma once

#include <optional>
#include <vector>

#include "vsod/autograd.hpp"

namespace vsod::nn {

/// Padding value meaning "same": dilation * (k - 1) / 2 on each side.
inline constexpr int kSamePadding = -1;

struct ConvOptions {
  int stride = 1;
  int dilation = 1;
  int padding = kSamePadding;
};

/// Cross-correlation of x [C,H,W] with weight [O,C,kH,kW] and optional bias [O].
/// Zero fill outside the image; taps may fall entirely in the padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvOptions opts = {});
inline Var conv2d(const Var& x, const Var& weight, ConvOptions opts = {}) {
  return conv2d(x, weight, Var(), opts);
}

/// Corner-aligned bilinear resize of [C,H,W]. Same size is a copy.
Var bilinear_resize(const Var& x, int out_h, int out_w);

enum class Activation { sigmoid, tanh, relu };
Var pointwise(const Var& x, Activation kind);
inline Var sigmoid(const Var& x) { return pointwise(x, Activation::sigmoid); }
inline Var tanh(const Var& x) { return pointwise(x, Activation::tanh); }
inline Var relu(const Var& x) { return pointwise(x, Activation::relu); }

/// Max-subtracted softmax along `axis` (negative axes count from the end).
Var softmax(const Var& x, int axis);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // Hadamard
Var scale(const Var& x, Scalar s);
Var one_minus(const Var& x);

/// Concatenate along axis 0; remaining extents must agree.
Var concat(const std::vector<Var>& xs);
/// Stack equally shaped tensors along a new leading axis.
Var stack(const std::vector<Var>& xs);
/// x[index] along axis 0 (drops the axis).
Var select(const Var& x, int index);
Var reshape(const Var& x, Shape shape);
/// [A,B,...] -> [B,A,...]
Var swap_leading_axes(const Var& x);

/// a [m,k] x b [k,n] with optional transposes of either operand.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);

/// [C,H,W] -> [C,1,1] spatial mean.
Var global_avg_pool(const Var& x);
/// [C,1,1] -> [C,H,W]
Var broadcast_spatial(const Var& x, int h, int w);

Var sum(const Var& x);
Var mean(const Var& x);

/// Mean over entries of the stable sigmoid cross-entropy
/// max(x,0) - x*t + log(1 + exp(-|x|)). Targets may be soft, must lie in [0,1].
Var bce_with_logits(const Var& logits, const Tensor& target);

/// Backward bilinear sampling: out(c,p) = x(c, p + flow(p)), zero outside.
/// flow is [2,H,W] with channel 0 = horizontal, 1 = vertical displacement.
/// Differentiable w.r.t. x only.
Var warp_bilinear(const Var& x, const Tensor& flow);

}  // namespace vsod::nn
