#include "vsod/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vsod/ops.hpp"

namespace vsod::nn {

namespace {

double reduce(const Var& y) {
  double s = 0;
  for (Scalar v : y.value().values()) s += v;
  return s;
}

}  // namespace

GradCheckReport grad_check(const std::function<Var()>& fn, const std::vector<Var>& leaves,
                           const GradCheckOptions& opts) {
  require(opts.eps >= 1e-7 && opts.eps <= 1e-3,
          "grad_check: eps " + std::to_string(opts.eps) + " outside [1e-7, 1e-3]");
  for (const auto& l : leaves) require(l.requires_grad(), "grad_check: leaf without requires_grad");

  std::vector<Var> mutable_leaves = leaves;
  for (auto& l : mutable_leaves) l.zero_grad();
  Var y = fn();
  require(y.value().all_finite(), "grad_check: non-finite forward output");
  backward(sum(y));
  std::vector<Tensor> analytic;
  for (const auto& l : mutable_leaves) analytic.push_back(l.grad());

  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  NoGradGuard guard;
  for (std::size_t li = 0; li < mutable_leaves.size(); ++li) {
    Tensor& value = mutable_leaves[li].mutable_value();
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (opts.max_coords != 0 && coords.size() > opts.max_coords) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const Scalar orig = value[i];
      value[i] = orig + static_cast<Scalar>(opts.eps);
      const double plus = reduce(fn());
      value[i] = orig - static_cast<Scalar>(opts.eps);
      const double minus = reduce(fn());
      value[i] = orig;
      const double numeric = (plus - minus) / (2 * opts.eps);
      const double a = analytic[li][i];
      if (!std::isfinite(numeric) || !std::isfinite(a))
        throw Error("grad_check: non-finite derivative at leaf " + std::to_string(li) +
                    ", coordinate " + std::to_string(i));
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++report.checked;
      if (err > report.max_relative_error) {
        report.max_relative_error = err;
        report.leaf = li;
        report.coordinate = i;
      }
    }
  }
  return report;
}

double grad_check(const std::function<Var(const Var&)>& fn, const Tensor& input, double eps) {
  Var x(input, true);
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check([&] { return fn(x); }, {x}, opts).max_relative_error;
}

}  // namespace vsod::nn
