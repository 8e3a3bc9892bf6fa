#include <gtest/gtest.h>

#include <random>

#include "metric_oracles.hpp"
#include "vsod/metrics.hpp"

using namespace vsod;
using namespace vsod::metrics;

namespace {

Tensor from_rows(const std::vector<std::vector<double>>& rows) {
  const int H = static_cast<int>(rows.size()), W = static_cast<int>(rows[0].size());
  Tensor t({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) t[y * W + x] = rows[y][x];
  return t;
}

oracle::Grid to_grid(const Tensor& t) {
  const int H = t.dim(1), W = t.dim(2);
  oracle::Grid g(H, std::vector<double>(W));
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) g[y][x] = t[y * W + x];
  return g;
}

// Random 8x8 pair; predictions quantized to 8 bits so thresholds hit ties.
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

}  // namespace

TEST(PrCurve, PerfectPredictor) {
  Tensor gt = from_rows({{1, 0, 0}, {1, 1, 0}});
  const PrCurve curve = pr_curve({gt}, {gt});
  ASSERT_EQ(curve.size(), 256u);
  for (const auto& p : curve) {
    if (p.threshold <= 0 || p.threshold >= 1) continue;
    EXPECT_EQ(p.precision, 1.0);
    EXPECT_EQ(p.recall, 1.0);
  }
}

TEST(PrCurve, TwoByTwoWorkedExample) {
  Tensor pred = from_rows({{0.9, 0.1}, {0.1, 0.1}});
  Tensor gt = from_rows({{1, 0}, {0, 0}});
  auto at = [&](double t) { return oracle::pr_brute({to_grid(pred)}, {to_grid(gt)}, {t})[0]; };
  EXPECT_EQ(at(0.5).p, 1.0);
  EXPECT_EQ(at(0.5).r, 1.0);
  EXPECT_EQ(at(0.05).p, 0.25);
  EXPECT_EQ(at(0.05).r, 1.0);
  // Library curve on the 256 grid: k = 13 is 0.051, k = 128 is 0.502.
  const PrCurve curve = pr_curve({pred}, {gt});
  EXPECT_EQ(curve[128].precision, 1.0);
  EXPECT_EQ(curve[128].recall, 1.0);
  EXPECT_EQ(curve[12].precision, 0.25);
  EXPECT_EQ(curve[12].recall, 1.0);
}

TEST(PrCurve, EmptyPredictionConvention) {
  Tensor pred({1, 4, 4}, 0.0);
  Tensor gt = pred;
  gt[5] = 1;
  const PrCurve curve = pr_curve({pred}, {gt});
  for (std::size_t k = 1; k < curve.size(); ++k) {
    EXPECT_EQ(curve[k].recall, 0.0);
    EXPECT_EQ(curve[k].precision, 1.0);
  }
}

TEST(PrCurve, RejectsBadInput) {
  EXPECT_THROW(pr_curve({}, {}), Error);
  EXPECT_THROW(pr_curve({Tensor({1, 2, 2})}, {Tensor({1, 2, 3})}), Error);
  MetricsConfig cfg;
  cfg.num_thresholds = 1;
  EXPECT_THROW(pr_curve({Tensor({1, 2, 2})}, {Tensor({1, 2, 2})}, cfg), Error);
}

TEST(MaxF, WorkedValues) {
  MetricsConfig cfg;
  EXPECT_NEAR(max_f_measure({{0.5, 0.8, 0.5}}, cfg), 1.3 * 0.4 / 0.74, 1e-15);
  EXPECT_NEAR(max_f_measure({{0.5, 0.8, 0.5}}, cfg), 0.70270, 5e-6);
  EXPECT_NEAR(f_measure(1.0, 0.1, 0.3), 0.325, 1e-15);
  EXPECT_EQ(max_f_measure({{0.2, 1.0, 0.1}, {0.4, 0.5, 0.5}}, cfg), 0.5);
  EXPECT_EQ(max_f_measure({{0.2, 1.0, 1.0}}, cfg), 1.0);
  EXPECT_EQ(f_measure(0, 0, 0.3), 0.0);
}

TEST(Jaccard, WorkedValues) {
  Tensor a = from_rows({{1, 1}, {0, 0}});
  Tensor b = from_rows({{0, 1}, {0, 1}});
  EXPECT_EQ(jaccard(a, b), 1.0 / 3.0);
  EXPECT_EQ(jaccard(a, a), 1.0);
  EXPECT_EQ(jaccard(a, from_rows({{0, 0}, {1, 1}})), 0.0);
  EXPECT_EQ(jaccard(Tensor({1, 2, 2}), Tensor({1, 2, 2})), 1.0);
}

TEST(SMeasure, SpecialCases) {
  Tensor gt = from_rows({{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}});
  EXPECT_NEAR(s_measure(gt, gt), 1.0, 1e-12);
  EXPECT_EQ(s_measure(Tensor({1, 4, 4}), Tensor({1, 4, 4})), 1.0);
  EXPECT_EQ(s_measure(Tensor({1, 4, 4}, 0.25), Tensor({1, 4, 4}, 1.0)), 0.25);
}

TEST(SMeasure, UniformHalfAgainstHalfForeground) {
  Tensor gt({1, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 4; ++x) gt[y * 8 + x] = 1;
  Tensor pred({1, 8, 8}, 0.5);
  EXPECT_NEAR(s_measure(pred, gt), oracle::s_measure_ref(to_grid(pred), to_grid(gt)), 1e-9);
}

TEST(ContourAccuracy, WorkedCases) {
  Tensor gt({1, 16, 16});
  for (int y = 5; y < 11; ++y)
    for (int x = 5; x < 11; ++x) gt[y * 16 + x] = 1;
  EXPECT_EQ(contour_accuracy(gt, gt), 1.0);
  // Cross-shaped (4-connected) one-pixel dilation.
  Tensor dil = gt;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      auto on = [&](int yy, int xx) {
        return yy >= 0 && yy < 16 && xx >= 0 && xx < 16 && gt[yy * 16 + xx] > 0.5;
      };
      if (on(y - 1, x) || on(y + 1, x) || on(y, x - 1) || on(y, x + 1)) dil[y * 16 + x] = 1;
    }
  EXPECT_EQ(boundary_tolerance(16, 16), 1.0);
  EXPECT_EQ(contour_accuracy(dil, gt), 1.0);
  Tensor far({1, 16, 16});
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) far[y * 16 + x] = 1;
  EXPECT_EQ(contour_accuracy(far, gt), 0.0);
  EXPECT_EQ(contour_accuracy(Tensor({1, 16, 16}), Tensor({1, 16, 16})), 1.0);
  EXPECT_EQ(contour_accuracy(Tensor({1, 16, 16}), gt), 0.0);
}

TEST(Metrics, OracleEquivalenceOnRandomInstances) {
  std::mt19937_64 rng(2024);
  MetricsConfig cfg;
  std::vector<double> grid(256);
  for (int k = 0; k < 256; ++k) grid[k] = k / 255.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int frames = 1 + trial % 3;
    std::vector<Tensor> preds, gts;
    std::vector<oracle::Grid> gp, gg;
    for (int f = 0; f < frames; ++f) {
      auto [p, g] = random_instance(rng);
      preds.push_back(p);
      gts.push_back(g);
      gp.push_back(to_grid(p));
      gg.push_back(to_grid(g));
    }
    const PrCurve curve = pr_curve(preds, gts, cfg);
    const auto ref = oracle::pr_brute(gp, gg, grid);
    ASSERT_EQ(curve.size(), ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) {
      EXPECT_NEAR(curve[k].precision, ref[k].p, 1e-9);
      EXPECT_NEAR(curve[k].recall, ref[k].r, 1e-9);
    }
    EXPECT_NEAR(max_f_measure(curve, cfg), oracle::max_f_brute(ref), 1e-9);

    const Tensor pm = binarize(preds[0], 0.5);
    EXPECT_NEAR(s_measure(preds[0], gts[0], cfg), oracle::s_measure_ref(gp[0], gg[0]), 1e-9);
    EXPECT_NEAR(jaccard(pm, gts[0]), oracle::jaccard_brute(to_grid(pm), gg[0]), 1e-9);
    EXPECT_NEAR(contour_accuracy(pm, gts[0], cfg),
                oracle::boundary_f_brute(to_grid(pm), gg[0], 1.0), 1e-9);
  }
}

TEST(Metrics, RangeAndRecallMonotone) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    auto [p, g] = random_instance(rng);
    const PrCurve curve = pr_curve({p}, {g});
    for (std::size_t k = 1; k < curve.size(); ++k) {
      EXPECT_LE(curve[k].recall, curve[k - 1].recall);
      EXPECT_GT(curve[k].threshold, curve[k - 1].threshold);
    }
    const MetricSet m = evaluate({p}, {g});
    for (double v : {m.max_f, m.s, m.j, m.boundary_f}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, DenseMaxFInvariantUnderMonotoneRemap) {
  std::mt19937_64 rng(8);
  MetricsConfig cfg;
  cfg.dense_thresholds = true;
  for (int trial = 0; trial < 30; ++trial) {
    auto [p, g] = random_instance(rng);
    Tensor q = p;
    for (auto& v : q.values()) v = v * v * v;  // strictly increasing on [0,1]
    EXPECT_NEAR(max_f_measure(pr_curve({p}, {g}, cfg), cfg),
                max_f_measure(pr_curve({q}, {g}, cfg), cfg), 1e-12);
  }
}

TEST(Metrics, PerFrameAveraging) {
  Tensor a = from_rows({{1, 0}, {0, 0}});
  Tensor b = from_rows({{1, 1}, {1, 1}});
  MetricsConfig cfg;
  cfg.averaging = PrAveraging::per_frame;
  const PrCurve curve = pr_curve({a, a}, {a, b}, cfg);
  // Threshold 0.5: frame 1 P=1 R=1, frame 2 P=1 R=0.25.
  EXPECT_EQ(curve[128].precision, 1.0);
  EXPECT_EQ(curve[128].recall, 0.625);
}

TEST(Report, FormatsKeysAndCsv) {
  MetricSet m{1.0, 0.5, 1.0, 0.25, 3};
  const std::string text = format_report(m, {{"vid", m}}, {"maxF", "J"});
  EXPECT_EQ(text, "pooled.maxF: 1.000000\npooled.J: 1.000000\nvid.maxF: 1.000000\nvid.J: 1.000000\n");
  EXPECT_THROW(format_report(m, {}, {"MAE"}), Error);
  const std::string csv = format_pr_csv(pr_curve({Tensor({1, 2, 2})}, {Tensor({1, 2, 2})}));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "threshold,precision,recall");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 257);
}
