#include "vsod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace vsod::metrics {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_map(const Tensor& t, const char* what) {
  require(t.rank() == 3 && t.dim(0) == 1,
          std::string(what) + " must be [1,H,W], got " + shape_str(t.shape()));
}

void require_same(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

struct FrameValues {
  std::vector<double> fg;  // sorted prediction values on GT foreground
  std::vector<double> bg;
};

FrameValues split_by_gt(const Tensor& pred, const Tensor& gt, double gt_threshold) {
  FrameValues out;
  for (std::size_t i = 0; i < pred.size(); ++i)
    (gt[i] >= gt_threshold ? out.fg : out.bg).push_back(pred[i]);
  std::sort(out.fg.begin(), out.fg.end());
  std::sort(out.bg.begin(), out.bg.end());
  return out;
}

long count_at_least(const std::vector<double>& sorted, double t) {
  return static_cast<long>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
}

std::vector<double> thresholds_for(const std::vector<FrameValues>& frames, const MetricsConfig& cfg) {
  std::vector<double> ts;
  if (cfg.dense_thresholds) {
    for (const auto& f : frames) {
      ts.insert(ts.end(), f.fg.begin(), f.fg.end());
      ts.insert(ts.end(), f.bg.begin(), f.bg.end());
    }
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  } else {
    ts.resize(cfg.num_thresholds);
    for (int k = 0; k < cfg.num_thresholds; ++k)
      ts[k] = static_cast<double>(k) / (cfg.num_thresholds - 1);
  }
  return ts;
}

double mean(const Tensor& t) {
  return std::accumulate(t.values().begin(), t.values().end(), 0.0) / t.size();
}

// Object-aware term of the structure measure for one region.
double object_score(const std::vector<double>& values) {
  if (values.empty()) return 0;
  const double n = values.size();
  const double x = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - x) * (v - x);
  const double sigma = values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

double s_object(const Tensor& pred, const Tensor& gt) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt[i] > 0.5)
      fg.push_back(pred[i]);
    else
      bg.push_back(1.0 - pred[i]);
  }
  const double u = static_cast<double>(fg.size()) / pred.size();
  return u * object_score(fg) + (1 - u) * object_score(bg);
}

double region_ssim(const Tensor& pred, const Tensor& gt, int y0, int y1, int x0, int x1) {
  const int W = pred.dim(2);
  const double n = static_cast<double>(y1 - y0) * (x1 - x0);
  double mx = 0, my = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      mx += pred[y * W + x];
      my += gt[y * W + x];
    }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      const double dx = pred[y * W + x] - mx, dy = gt[y * W + x] - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  sxx /= n - 1 + kEps;
  syy /= n - 1 + kEps;
  sxy /= n - 1 + kEps;
  const double alpha = 4 * mx * my * sxy;
  const double beta = (mx * mx + my * my) * (sxx + syy);
  if (alpha != 0) return alpha / (beta + kEps);
  if (beta == 0) return 1.0;
  return 0.0;
}

double s_region(const Tensor& pred, const Tensor& gt) {
  const int H = pred.dim(1), W = pred.dim(2);
  double total = 0, sx = 0, sy = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const double g = gt[y * W + x];
      total += g;
      sx += g * (x + 1);
      sy += g * (y + 1);
    }
  // Centroid in 1-based coordinates, rounded half away from zero.
  int cx, cy;
  if (total == 0) {
    cx = static_cast<int>(std::round(W / 2.0));
    cy = static_cast<int>(std::round(H / 2.0));
  } else {
    cx = static_cast<int>(std::round(sx / total));
    cy = static_cast<int>(std::round(sy / total));
  }
  const double area = static_cast<double>(W) * H;
  const double w1 = static_cast<double>(cx) * cy / area;
  const double w2 = static_cast<double>(W - cx) * cy / area;
  const double w3 = static_cast<double>(cx) * (H - cy) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  auto quad = [&](double w, int y0, int y1, int x0, int x1) {
    if (y1 <= y0 || x1 <= x0) return 0.0;  // empty quadrant carries zero weight
    return w * region_ssim(pred, gt, y0, y1, x0, x1);
  };
  return quad(w1, 0, cy, 0, cx) + quad(w2, 0, cy, cx, W) + quad(w3, cy, H, 0, cx) +
         quad(w4, cy, H, cx, W);
}

}  // namespace

void MetricsConfig::validate() const {
  require(beta_sq > 0, "beta_sq must be positive");
  require(s_alpha >= 0 && s_alpha <= 1, "s_alpha must lie in [0,1]");
  require(num_thresholds >= 2, "num_thresholds must be at least 2");
  require(boundary_tolerance_fraction >= 0 && boundary_tolerance_px >= 0,
          "boundary tolerance must be non-negative");
}

Tensor binarize(const Tensor& map, double threshold) {
  Tensor out(map.shape());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] >= threshold ? 1 : 0;
  return out;
}

PrCurve pr_curve(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                 const MetricsConfig& cfg) {
  cfg.validate();
  require(!preds.empty(), "pr_curve needs at least one frame");
  require(preds.size() == gts.size(), "pr_curve: prediction and ground-truth counts differ");
  std::vector<FrameValues> frames;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    require_map(preds[f], "prediction");
    require_same(preds[f], gts[f]);
    frames.push_back(split_by_gt(preds[f], gts[f], cfg.gt_binarize_threshold));
  }
  const std::vector<double> ts = thresholds_for(frames, cfg);
  PrCurve curve;
  curve.reserve(ts.size());
  for (double t : ts) {
    PrPoint point{t, 0, 0};
    if (cfg.averaging == PrAveraging::pooled) {
      long tp = 0, fp = 0, positives = 0;
      for (const auto& f : frames) {
        tp += count_at_least(f.fg, t);
        fp += count_at_least(f.bg, t);
        positives += static_cast<long>(f.fg.size());
      }
      point.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
      point.recall = positives == 0 ? 0.0 : static_cast<double>(tp) / positives;
    } else {
      for (const auto& f : frames) {
        const long tp = count_at_least(f.fg, t), fp = count_at_least(f.bg, t);
        point.precision += tp + fp == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
        point.recall += f.fg.empty() ? 0.0 : static_cast<double>(tp) / f.fg.size();
      }
      point.precision /= frames.size();
      point.recall /= frames.size();
    }
    curve.push_back(point);
  }
  return curve;
}

double f_measure(double precision, double recall, double beta_sq) {
  const double denom = beta_sq * precision + recall;
  if (denom == 0) return 0;
  return (1 + beta_sq) * precision * recall / denom;
}

double max_f_measure(const PrCurve& curve, const MetricsConfig& cfg) {
  require(!curve.empty(), "max_f_measure: empty curve");
  double best = 0;
  for (const auto& p : curve) best = std::max(best, f_measure(p.precision, p.recall, cfg.beta_sq));
  return best;
}

double s_measure(const Tensor& pred, const Tensor& gt_map, const MetricsConfig& cfg) {
  require_map(pred, "prediction");
  require_same(pred, gt_map);
  const Tensor gt = binarize(gt_map, cfg.gt_binarize_threshold);
  const double y = mean(gt);
  double q;
  if (y == 0) {
    q = 1.0 - mean(pred);
  } else if (y == 1) {
    q = mean(pred);
  } else {
    q = cfg.s_alpha * s_object(pred, gt) + (1 - cfg.s_alpha) * s_region(pred, gt);
  }
  return std::clamp(q, 0.0, 1.0);
}

double jaccard(const Tensor& pred_mask, const Tensor& gt_mask) {
  require_same(pred_mask, gt_mask);
  long inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred_mask.size(); ++i) {
    const bool p = pred_mask[i] > 0.5, g = gt_mask[i] > 0.5;
    inter += p && g;
    uni += p || g;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

Tensor boundary_map(const Tensor& mask) {
  require_map(mask, "mask");
  const int H = mask.dim(1), W = mask.dim(2);
  Tensor out(mask.shape());
  auto fg = [&](int y, int x) { return mask[y * W + x] > 0.5; };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      if (!fg(y, x)) continue;
      const bool edge = (y > 0 && !fg(y - 1, x)) || (y + 1 < H && !fg(y + 1, x)) ||
                        (x > 0 && !fg(y, x - 1)) || (x + 1 < W && !fg(y, x + 1));
      out[y * W + x] = edge ? 1 : 0;
    }
  return out;
}

double boundary_tolerance(int height, int width, const MetricsConfig& cfg) {
  if (cfg.boundary_tolerance_px > 0) return cfg.boundary_tolerance_px;
  const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
  return std::max(1.0, std::ceil(cfg.boundary_tolerance_fraction * diag));
}

double contour_accuracy(const Tensor& pred_mask, const Tensor& gt_mask, const MetricsConfig& cfg) {
  require_same(pred_mask, gt_mask);
  const Tensor pb = boundary_map(pred_mask), gb = boundary_map(gt_mask);
  const int H = pb.dim(1), W = pb.dim(2);
  const double tol = boundary_tolerance(H, W, cfg);
  const int r = static_cast<int>(std::floor(tol));
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= tol * tol) offsets.emplace_back(dy, dx);

  auto matched = [&](const Tensor& from, const Tensor& to, long& total) {
    long hits = 0;
    total = 0;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        if (from[y * W + x] < 0.5) continue;
        ++total;
        for (auto [dy, dx] : offsets) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < H && xx >= 0 && xx < W && to[yy * W + xx] > 0.5) {
            ++hits;
            break;
          }
        }
      }
    return hits;
  };
  long np = 0, ng = 0;
  const long mp = matched(pb, gb, np);
  const long mg = matched(gb, pb, ng);
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double precision = static_cast<double>(mp) / np, recall = static_cast<double>(mg) / ng;
  if (precision + recall == 0) return 0.0;
  return 2 * precision * recall / (precision + recall);
}

MetricSet evaluate(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                   const MetricsConfig& cfg) {
  MetricSet out;
  out.max_f = max_f_measure(pr_curve(preds, gts, cfg), cfg);
  for (std::size_t f = 0; f < preds.size(); ++f) {
    const Tensor pm = binarize(preds[f], cfg.pred_binarize_threshold);
    const Tensor gm = binarize(gts[f], cfg.gt_binarize_threshold);
    out.s += s_measure(preds[f], gts[f], cfg);
    out.j += jaccard(pm, gm);
    out.boundary_f += contour_accuracy(pm, gm, cfg);
  }
  out.frames = static_cast<int>(preds.size());
  out.s /= out.frames;
  out.j /= out.frames;
  out.boundary_f /= out.frames;
  return out;
}

std::string format_report(const MetricSet& pooled, const std::vector<VideoScores>& videos,
                          const std::vector<std::string>& keys) {
  auto value_of = [](const MetricSet& m, const std::string& key) {
    if (key == "maxF") return m.max_f;
    if (key == "S") return m.s;
    if (key == "J") return m.j;
    if (key == "boundaryF") return m.boundary_f;
    throw Error("unknown metric '" + key + "' (expected maxF, S, J, boundaryF)");
  };
  std::string out;
  char line[256];
  auto emit = [&](const std::string& scope, const MetricSet& m) {
    for (const auto& key : keys) {
      std::snprintf(line, sizeof line, "%s.%s: %.6f\n", scope.c_str(), key.c_str(), value_of(m, key));
      out += line;
    }
  };
  emit("pooled", pooled);
  for (const auto& v : videos) emit(v.video, v.scores);
  return out;
}

std::string format_pr_csv(const PrCurve& curve) {
  std::string out = "threshold,precision,recall\n";
  char line[128];
  for (const auto& p : curve) {
    std::snprintf(line, sizeof line, "%.6f,%.9f,%.9f\n", p.threshold, p.precision, p.recall);
    out += line;
  }
  return out;
}

}  // namespace vsod::metrics
