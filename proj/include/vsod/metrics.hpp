#pragma once

#include <string>
#include <vector>

#include "vsod/tensor.hpp"

namespace vsod::metrics {

enum class PrAveraging { pooled, per_frame };

struct MetricsConfig {
  double beta_sq = 0.3;
  double s_alpha = 0.5;
  int num_thresholds = 256;
  /// When true, thresholds are all distinct prediction values instead of the even grid.
  bool dense_thresholds = false;
  /// Contour tolerance as a fraction of the image diagonal; at least one pixel.
  double boundary_tolerance_fraction = 0.008;
  /// Overrides the diagonal rule when positive (pixels).
  double boundary_tolerance_px = 0;
  double gt_binarize_threshold = 0.5;
  double pred_binarize_threshold = 0.5;
  PrAveraging averaging = PrAveraging::pooled;

  void validate() const;
};

struct PrPoint {
  double threshold;
  double precision;
  double recall;
};
using PrCurve = std::vector<PrPoint>;

/// Values >= threshold become 1, others 0.
Tensor binarize(const Tensor& map, double threshold);

/// Pooled (micro) or frame-averaged PR curve. Predictions are selected with pred >= t;
/// precision is 1 when nothing is selected.
PrCurve pr_curve(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                 const MetricsConfig& cfg = {});

double f_measure(double precision, double recall, double beta_sq);
double max_f_measure(const PrCurve& curve, const MetricsConfig& cfg = {});

double s_measure(const Tensor& pred, const Tensor& gt, const MetricsConfig& cfg = {});

/// Intersection over union of two binary masks; 1 when both are empty.
double jaccard(const Tensor& pred_mask, const Tensor& gt_mask);

/// 4-connected boundary of a binary mask: foreground pixels with a background
/// 4-neighbour inside the image.
Tensor boundary_map(const Tensor& mask);
double boundary_tolerance(int height, int width, const MetricsConfig& cfg = {});
double contour_accuracy(const Tensor& pred_mask, const Tensor& gt_mask,
                        const MetricsConfig& cfg = {});

struct MetricSet {
  double max_f = 0;
  double s = 0;
  double j = 0;
  double boundary_f = 0;
  int frames = 0;
};

/// All four scores over aligned prediction / ground-truth lists. S, J and boundary F are
/// frame means; maxF comes from the curve.
MetricSet evaluate(const std::vector<Tensor>& preds, const std::vector<Tensor>& gts,
                   const MetricsConfig& cfg = {});

struct VideoScores {
  std::string video;
  MetricSet scores;
};

/// "key: value" lines, pooled first then one block per video. `keys` selects among
/// maxF, S, J, boundaryF.
std::string format_report(const MetricSet& pooled, const std::vector<VideoScores>& videos,
                          const std::vector<std::string>& keys);

std::string format_pr_csv(const PrCurve& curve);

}  // namespace vsod::metrics
