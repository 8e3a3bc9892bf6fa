#include "vsod/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace vsod::nn {

namespace {

using MatR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void accumulate(const Var& v, const Tensor& g) {
  if (!v.requires_grad()) return;
  Tensor& dst = detail::grad_of(*v.node());
  Scalar* d = dst.data();
  const Scalar* s = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

Tensor& grad_ref(const Var& v) { return detail::grad_of(*v.node()); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shapes " + shape_str(a.shape()) +
                                      " and " + shape_str(b.shape()) + " differ");
}

struct ConvGeometry {
  int channels, height, width;
  int out_channels, kh, kw;
  int stride, dilation, pad_h, pad_w;
  int out_h, out_w;
  int patch() const { return channels * kh * kw; }
  int positions() const { return out_h * out_w; }
};

void im2col(const Scalar* x, const ConvGeometry& g, Scalar* col) {
  const int P = g.positions();
  for (int c = 0; c < g.channels; ++c) {
    const Scalar* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        Scalar* row = col + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * P;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad_h + i * g.dilation;
          Scalar* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill_n(dst, g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = plane + static_cast<std::size_t>(iy) * g.width;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad_w + j * g.dilation;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : Scalar(0);
          }
        }
      }
    }
  }
}

void col2im_add(const Scalar* col, const ConvGeometry& g, Scalar* x) {
  const int P = g.positions();
  for (int c = 0; c < g.channels; ++c) {
    Scalar* plane = x + static_cast<std::size_t>(c) * g.height * g.width;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const Scalar* row = col + static_cast<std::size_t>((c * g.kh + i) * g.kw + j) * P;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.pad_h + i * g.dilation;
          if (iy < 0 || iy >= g.height) continue;
          Scalar* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const Scalar* src = row + oy * g.out_w;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.pad_w + j * g.dilation;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Per-axis corner-aligned interpolation table.
struct AxisTaps {
  std::vector<int> lo, hi;
  std::vector<Scalar> frac;
};

AxisTaps axis_taps(int in, int out) {
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (int o = 0; o < out; ++o) {
    const double src =
        (in == 1 || out == 1) ? 0.0 : static_cast<double>(o) * (in - 1) / (out - 1);
    int i0 = std::min(static_cast<int>(std::floor(src)), in - 1);
    t.lo[o] = i0;
    t.hi[o] = std::min(i0 + 1, in - 1);
    t.frac[o] = static_cast<Scalar>(src - i0);
  }
  return t;
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvOptions opts) {
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  require(X.rank() == 3 && W.rank() == 4,
          "conv2d: expected input [C,H,W] and kernel [O,C,kH,kW], got " + shape_str(X.shape()) +
              " and " + shape_str(W.shape()));
  require(W.dim(1) == X.dim(0), "conv2d: input " + shape_str(X.shape()) +
                                    " incompatible with kernel " + shape_str(W.shape()));
  require(opts.stride >= 1 && opts.dilation >= 1, "conv2d: stride and dilation must be >= 1");

  ConvGeometry g{};
  g.channels = X.dim(0);
  g.height = X.dim(1);
  g.width = X.dim(2);
  g.out_channels = W.dim(0);
  g.kh = W.dim(2);
  g.kw = W.dim(3);
  g.stride = opts.stride;
  g.dilation = opts.dilation;
  if (opts.padding == kSamePadding) {
    require(g.kh % 2 == 1 && g.kw % 2 == 1, "conv2d: same padding needs odd kernel, got " +
                                                shape_str(W.shape()));
    g.pad_h = opts.dilation * (g.kh - 1) / 2;
    g.pad_w = opts.dilation * (g.kw - 1) / 2;
  } else {
    require(opts.padding >= 0, "conv2d: negative padding");
    g.pad_h = g.pad_w = opts.padding;
  }
  g.out_h = (g.height + 2 * g.pad_h - g.dilation * (g.kh - 1) - 1) / g.stride + 1;
  g.out_w = (g.width + 2 * g.pad_w - g.dilation * (g.kw - 1) - 1) / g.stride + 1;
  require(g.out_h >= 1 && g.out_w >= 1, "conv2d: input " + shape_str(X.shape()) +
                                            " too small for kernel " + shape_str(W.shape()));
  if (bias.defined())
    require(bias.shape() == Shape{g.out_channels},
            "conv2d: bias " + shape_str(bias.shape()) + " does not match kernel " +
                shape_str(W.shape()));

  const int K = g.patch();
  const int P = g.positions();
  const bool direct = g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad_h == 0 && g.pad_w == 0;

  std::shared_ptr<Tensor> col;
  if (!direct) {
    col = std::make_shared<Tensor>(Shape{K, P});
    im2col(X.data(), g, col->data());
  }
  const Scalar* col_data = direct ? X.data() : col->data();

  Tensor out({g.out_channels, g.out_h, g.out_w});
  MapR out_m(out.data(), g.out_channels, P);
  out_m.noalias() = CMapR(W.data(), g.out_channels, K) * CMapR(col_data, K, P);
  if (bias.defined()) {
    const Scalar* b = bias.value().data();
    for (int o = 0; o < g.out_channels; ++o) out_m.row(o).array() += b[o];
  }

  return make_result(std::move(out), {x, weight, bias}, [x, weight, bias, col, g, direct](
                                                             const Tensor& gout) {
    const int K = g.patch();
    const int P = g.positions();
    CMapR go(gout.data(), g.out_channels, P);
    const Scalar* col_data = direct ? x.value().data() : col->data();
    if (weight.requires_grad()) {
      MapR gw(grad_ref(weight).data(), g.out_channels, K);
      gw.noalias() += go * CMapR(col_data, K, P).transpose();
    }
    if (bias.defined() && bias.requires_grad()) {
      Scalar* gb = grad_ref(bias).data();
      for (int o = 0; o < g.out_channels; ++o) gb[o] += go.row(o).sum();
    }
    if (x.requires_grad()) {
      CMapR w(weight.value().data(), g.out_channels, K);
      if (direct) {
        MapR gx(grad_ref(x).data(), K, P);
        gx.noalias() += w.transpose() * go;
      } else {
        MatR dcol = w.transpose() * go;
        col2im_add(dcol.data(), g, grad_ref(x).data());
      }
    }
  });
}

Var bilinear_resize(const Var& x, int out_h, int out_w) {
  const Tensor& X = x.value();
  require(X.rank() == 3, "bilinear_resize: expected [C,H,W], got " + shape_str(X.shape()));
  require(out_h >= 1 && out_w >= 1, "bilinear_resize: non-positive target size " +
                                        std::to_string(out_h) + "x" + std::to_string(out_w));
  const int C = X.dim(0), H = X.dim(1), W = X.dim(2);
  if (H == out_h && W == out_w) {
    return make_result(X, {x}, [x](const Tensor& g) { accumulate(x, g); });
  }
  auto ty = std::make_shared<AxisTaps>(axis_taps(H, out_h));
  auto tx = std::make_shared<AxisTaps>(axis_taps(W, out_w));
  Tensor out({C, out_h, out_w});
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const Scalar fy = ty->frac[y];
      for (int xx = 0; xx < out_w; ++xx) {
        const Scalar fx = tx->frac[xx];
        const Scalar top = (1 - fx) * X.at(c, ty->lo[y], tx->lo[xx]) + fx * X.at(c, ty->lo[y], tx->hi[xx]);
        const Scalar bot = (1 - fx) * X.at(c, ty->hi[y], tx->lo[xx]) + fx * X.at(c, ty->hi[y], tx->hi[xx]);
        out.at(c, y, xx) = (1 - fy) * top + fy * bot;
      }
    }
  }
  return make_result(std::move(out), {x}, [x, ty, tx, C, out_h, out_w](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < out_h; ++y) {
        const Scalar fy = ty->frac[y];
        for (int xx = 0; xx < out_w; ++xx) {
          const Scalar fx = tx->frac[xx];
          const Scalar v = g.at(c, y, xx);
          gx.at(c, ty->lo[y], tx->lo[xx]) += (1 - fy) * (1 - fx) * v;
          gx.at(c, ty->lo[y], tx->hi[xx]) += (1 - fy) * fx * v;
          gx.at(c, ty->hi[y], tx->lo[xx]) += fy * (1 - fx) * v;
          gx.at(c, ty->hi[y], tx->hi[xx]) += fy * fx * v;
        }
      }
    }
  });
}

Var pointwise(const Var& x, Activation kind) {
  const Tensor& X = x.value();
  Tensor out(X.shape());
  for (std::size_t i = 0; i < X.size(); ++i) {
    const Scalar v = X[i];
    switch (kind) {
      case Activation::sigmoid:
        if (v >= 0) {
          out[i] = 1 / (1 + std::exp(-v));
        } else {
          const Scalar e = std::exp(v);
          out[i] = e / (1 + e);
        }
        break;
      case Activation::tanh:
        out[i] = std::tanh(v);
        break;
      case Activation::relu:
        out[i] = v > 0 ? v : Scalar(0);
        break;
    }
  }
  auto y = std::make_shared<Tensor>(out);
  return make_result(std::move(out), {x}, [x, y, kind](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    const Tensor& X = x.value();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Scalar yi = (*y)[i];
      switch (kind) {
        case Activation::sigmoid:
          gx[i] += g[i] * yi * (1 - yi);
          break;
        case Activation::tanh:
          gx[i] += g[i] * (1 - yi * yi);
          break;
        case Activation::relu:
          if (X[i] > 0) gx[i] += g[i];
          break;
      }
    }
  });
}

Var softmax(const Var& x, int axis) {
  const Tensor& X = x.value();
  const int r = X.rank();
  if (axis < 0) axis += r;
  require(axis >= 0 && axis < r, "softmax: invalid axis for shape " + shape_str(X.shape()));
  std::size_t outer = 1, inner = 1;
  for (int a = 0; a < axis; ++a) outer *= X.dim(a);
  for (int a = axis + 1; a < r; ++a) inner *= X.dim(a);
  const int n = X.dim(axis);
  Tensor out(X.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      Scalar mx = X[base];
      for (int k = 1; k < n; ++k) mx = std::max(mx, X[base + k * inner]);
      Scalar total = 0;
      for (int k = 0; k < n; ++k) {
        const Scalar e = std::exp(X[base + k * inner] - mx);
        out[base + k * inner] = e;
        total += e;
      }
      for (int k = 0; k < n; ++k) out[base + k * inner] /= total;
    }
  }
  auto y = std::make_shared<Tensor>(out);
  return make_result(std::move(out), {x}, [x, y, outer, inner, n](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * n * inner + in;
        Scalar dot = 0;
        for (int k = 0; k < n; ++k) dot += g[base + k * inner] * (*y)[base + k * inner];
        for (int k = 0; k < n; ++k) {
          const std::size_t i = base + k * inner;
          gx[i] += (*y)[i] * (g[i] - dot);
        }
      }
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
    accumulate(a, g);
    accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
    accumulate(a, g);
    if (b.requires_grad()) {
      Tensor& gb = grad_ref(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.value());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [a, b](const Tensor& g) {
    if (a.requires_grad()) {
      Tensor& ga = grad_ref(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b.value()[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = grad_ref(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a.value()[i];
    }
  });
}

Var scale(const Var& x, Scalar s) {
  Tensor out(x.value());
  for (auto& v : out.values()) v *= s;
  return make_result(std::move(out), {x}, [x, s](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
  });
}

Var one_minus(const Var& x) {
  Tensor out(x.value());
  for (auto& v : out.values()) v = 1 - v;
  return make_result(std::move(out), {x}, [x](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] -= g[i];
  });
}

Var concat(const std::vector<Var>& xs) {
  require(!xs.empty(), "concat: empty input list");
  Shape shape = xs.front().shape();
  require(!shape.empty(), "concat: rank-0 input");
  int total = 0;
  for (const auto& v : xs) {
    Shape a = v.shape(), b = shape;
    require(a.size() == b.size(), "concat: rank mismatch " + shape_str(a) + " vs " + shape_str(b));
    a[0] = b[0] = 0;
    require(a == b, "concat: shapes " + shape_str(v.shape()) + " and " + shape_str(shape) +
                        " disagree beyond axis 0");
    total += v.shape()[0];
  }
  shape[0] = total;
  Tensor out(shape);
  std::size_t offset = 0;
  for (const auto& v : xs) {
    std::copy(v.value().data(), v.value().data() + v.value().size(), out.data() + offset);
    offset += v.value().size();
  }
  return make_result(std::move(out), xs, [xs](const Tensor& g) {
    std::size_t offset = 0;
    for (const auto& v : xs) {
      const std::size_t n = v.value().size();
      if (v.requires_grad()) {
        Tensor& gv = grad_ref(v);
        for (std::size_t i = 0; i < n; ++i) gv[i] += g[offset + i];
      }
      offset += n;
    }
  });
}

Var stack(const std::vector<Var>& xs) {
  require(!xs.empty(), "stack: empty input list");
  std::vector<Var> lifted;
  lifted.reserve(xs.size());
  for (const auto& v : xs) {
    require(v.shape() == xs.front().shape(),
            "stack: shapes " + shape_str(v.shape()) + " and " + shape_str(xs.front().shape()));
    Shape s{1};
    s.insert(s.end(), v.shape().begin(), v.shape().end());
    lifted.push_back(reshape(v, s));
  }
  return concat(lifted);
}

Var select(const Var& x, int index) {
  const Tensor& X = x.value();
  require(X.rank() >= 2, "select: needs rank >= 2, got " + shape_str(X.shape()));
  require(index >= 0 && index < X.dim(0), "select: index out of range for " + shape_str(X.shape()));
  Shape rest(X.shape().begin() + 1, X.shape().end());
  const std::size_t n = shape_numel(rest);
  Tensor out(rest);
  std::copy_n(X.data() + index * n, n, out.data());
  return make_result(std::move(out), {x}, [x, index, n](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (std::size_t i = 0; i < n; ++i) gx[index * n + i] += g[i];
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_result(std::move(out), {x}, [x](const Tensor& g) { accumulate(x, g); });
}

Var swap_leading_axes(const Var& x) {
  const Tensor& X = x.value();
  require(X.rank() >= 2, "swap_leading_axes: needs rank >= 2, got " + shape_str(X.shape()));
  const int A = X.dim(0), B = X.dim(1);
  const std::size_t inner = X.size() / (static_cast<std::size_t>(A) * B);
  Shape s = X.shape();
  std::swap(s[0], s[1]);
  Tensor out(s);
  for (int a = 0; a < A; ++a)
    for (int b = 0; b < B; ++b)
      std::copy_n(X.data() + (a * B + b) * inner, inner, out.data() + (b * A + a) * inner);
  return make_result(std::move(out), {x}, [x, A, B, inner](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (int a = 0; a < A; ++a)
      for (int b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i)
          gx[(a * B + b) * inner + i] += g[(b * A + a) * inner + i];
  });
}

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require(A.rank() == 2 && B.rank() == 2,
          "matmul: expected matrices, got " + shape_str(A.shape()) + " and " + shape_str(B.shape()));
  const int m = transpose_a ? A.dim(1) : A.dim(0);
  const int k = transpose_a ? A.dim(0) : A.dim(1);
  const int kb = transpose_b ? B.dim(1) : B.dim(0);
  const int n = transpose_b ? B.dim(0) : B.dim(1);
  require(k == kb, "matmul: inner extents differ for " + shape_str(A.shape()) + " and " +
                       shape_str(B.shape()));
  CMapR am(A.data(), A.dim(0), A.dim(1));
  CMapR bm(B.data(), B.dim(0), B.dim(1));
  Tensor out({m, n});
  MapR om(out.data(), m, n);
  if (!transpose_a && !transpose_b) om.noalias() = am * bm;
  if (transpose_a && !transpose_b) om.noalias() = am.transpose() * bm;
  if (!transpose_a && transpose_b) om.noalias() = am * bm.transpose();
  if (transpose_a && transpose_b) om.noalias() = am.transpose() * bm.transpose();
  return make_result(std::move(out), {a, b}, [a, b, transpose_a, transpose_b, m, n](const Tensor& g) {
    CMapR gm(g.data(), m, n);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    CMapR am(A.data(), A.dim(0), A.dim(1));
    CMapR bm(B.data(), B.dim(0), B.dim(1));
    if (a.requires_grad()) {
      MapR ga(grad_ref(a).data(), A.dim(0), A.dim(1));
      // C = op(A) op(B); dop(A) = G op(B)^T
      if (!transpose_a && !transpose_b) ga.noalias() += gm * bm.transpose();
      if (!transpose_a && transpose_b) ga.noalias() += gm * bm;
      if (transpose_a && !transpose_b) ga.noalias() += bm * gm.transpose();
      if (transpose_a && transpose_b) ga.noalias() += bm.transpose() * gm.transpose();
    }
    if (b.requires_grad()) {
      MapR gb(grad_ref(b).data(), B.dim(0), B.dim(1));
      // dop(B) = op(A)^T G
      if (!transpose_a && !transpose_b) gb.noalias() += am.transpose() * gm;
      if (transpose_a && !transpose_b) gb.noalias() += am * gm;
      if (!transpose_a && transpose_b) gb.noalias() += gm.transpose() * am;
      if (transpose_a && transpose_b) gb.noalias() += gm.transpose() * am.transpose();
    }
  });
}

Var global_avg_pool(const Var& x) {
  const Tensor& X = x.value();
  require(X.rank() == 3, "global_avg_pool: expected [C,H,W], got " + shape_str(X.shape()));
  const int C = X.dim(0);
  const std::size_t plane = static_cast<std::size_t>(X.dim(1)) * X.dim(2);
  Tensor out({C, 1, 1});
  for (int c = 0; c < C; ++c) {
    Scalar s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += X[c * plane + i];
    out[c] = s / static_cast<Scalar>(plane);
  }
  return make_result(std::move(out), {x}, [x, C, plane](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (int c = 0; c < C; ++c) {
      const Scalar v = g[c] / static_cast<Scalar>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += v;
    }
  });
}

Var broadcast_spatial(const Var& x, int h, int w) {
  const Tensor& X = x.value();
  require(X.rank() == 3 && X.dim(1) == 1 && X.dim(2) == 1,
          "broadcast_spatial: expected [C,1,1], got " + shape_str(X.shape()));
  const int C = X.dim(0);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor out({C, h, w});
  for (int c = 0; c < C; ++c) std::fill_n(out.data() + c * plane, plane, X[c]);
  return make_result(std::move(out), {x}, [x, C, plane](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (int c = 0; c < C; ++c) {
      Scalar s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += g[c * plane + i];
      gx[c] += s;
    }
  });
}

Var sum(const Var& x) {
  Scalar s = 0;
  for (Scalar v : x.value().values()) s += v;
  return make_result(Tensor({1}, s), {x}, [x](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (auto& v : gx.values()) v += g[0];
  });
}

Var mean(const Var& x) { return scale(sum(x), Scalar(1) / static_cast<Scalar>(x.value().size())); }

Var bce_with_logits(const Var& logits, const Tensor& target) {
  const Tensor& X = logits.value();
  require(X.shape() == target.shape(), "bce_with_logits: logits " + shape_str(X.shape()) +
                                           " and target " + shape_str(target.shape()) + " differ");
  for (Scalar t : target.values())
    require(t >= 0 && t <= 1, "bce_with_logits: target value " + std::to_string(t) +
                                  " outside [0,1]");
  Scalar total = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const Scalar x = X[i];
    total += std::max(x, Scalar(0)) - x * target[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const Scalar n = static_cast<Scalar>(X.size());
  auto tgt = std::make_shared<Tensor>(target);
  return make_result(Tensor({1}, total / n), {logits}, [logits, tgt, n](const Tensor& g) {
    if (!logits.requires_grad()) return;
    Tensor& gx = grad_ref(logits);
    const Tensor& X = logits.value();
    for (std::size_t i = 0; i < X.size(); ++i) {
      const Scalar x = X[i];
      const Scalar s = x >= 0 ? 1 / (1 + std::exp(-x)) : std::exp(x) / (1 + std::exp(x));
      gx[i] += g[0] * (s - (*tgt)[i]) / n;
    }
  });
}

namespace {

// Visits the (up to four) in-bounds bilinear taps of a sample position.
template <typename F>
void for_each_tap(Scalar sy, Scalar sx, int H, int W, F&& f) {
  const Scalar fy0 = std::floor(sy), fx0 = std::floor(sx);
  const int y0 = static_cast<int>(fy0), x0 = static_cast<int>(fx0);
  const Scalar wy = sy - fy0, wx = sx - fx0;
  const int ys[2] = {y0, y0 + 1};
  const int xs[2] = {x0, x0 + 1};
  const Scalar wys[2] = {1 - wy, wy};
  const Scalar wxs[2] = {1 - wx, wx};
  for (int a = 0; a < 2; ++a) {
    if (wys[a] == 0 || ys[a] < 0 || ys[a] >= H) continue;
    for (int b = 0; b < 2; ++b) {
      if (wxs[b] == 0 || xs[b] < 0 || xs[b] >= W) continue;
      f(ys[a], xs[b], wys[a] * wxs[b]);
    }
  }
}

}  // namespace

Var warp_bilinear(const Var& x, const Tensor& flow) {
  const Tensor& X = x.value();
  require(X.rank() == 3, "warp: expected [C,H,W], got " + shape_str(X.shape()));
  require(flow.shape() == Shape{2, X.dim(1), X.dim(2)},
          "warp: flow " + shape_str(flow.shape()) + " does not match input " + shape_str(X.shape()));
  const int C = X.dim(0), H = X.dim(1), W = X.dim(2);
  Tensor out(X.shape());
  for (int y = 0; y < H; ++y) {
    for (int xx = 0; xx < W; ++xx) {
      const Scalar sx = xx + flow.at(0, y, xx);
      const Scalar sy = y + flow.at(1, y, xx);
      for (int c = 0; c < C; ++c) {
        Scalar acc = 0;
        for_each_tap(sy, sx, H, W, [&](int ty, int tx, Scalar w) { acc += w * X.at(c, ty, tx); });
        out.at(c, y, xx) = acc;
      }
    }
  }
  auto fl = std::make_shared<Tensor>(flow);
  return make_result(std::move(out), {x}, [x, fl, C, H, W](const Tensor& g) {
    if (!x.requires_grad()) return;
    Tensor& gx = grad_ref(x);
    for (int y = 0; y < H; ++y) {
      for (int xx = 0; xx < W; ++xx) {
        const Scalar sx = xx + fl->at(0, y, xx);
        const Scalar sy = y + fl->at(1, y, xx);
        for (int c = 0; c < C; ++c) {
          const Scalar gv = g.at(c, y, xx);
          for_each_tap(sy, sx, H, W, [&](int ty, int tx, Scalar w) { gx.at(c, ty, tx) += w * gv; });
        }
      }
    }
  });
}

}  // namespace vsod::nn
