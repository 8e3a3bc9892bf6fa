#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vsod/autograd.hpp"

namespace vsod::nn {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Coordinates checked per leaf; 0 checks all, otherwise a seeded random subset.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0;
  std::size_t leaf = 0;
  std::size_t coordinate = 0;
  std::size_t checked = 0;
};

/// Central differences against reverse mode for sum(fn()). Error per coordinate is
/// |a - n| / max(1, |a|, |n|). Leaves are perturbed in place and restored.
GradCheckReport grad_check(const std::function<Var()>& fn, const std::vector<Var>& leaves,
                           const GradCheckOptions& opts = {});

/// Single-input form: returns the max relative error of d sum(fn(x)) / dx at `input`.
double grad_check(const std::function<Var(const Var&)>& fn, const Tensor& input,
                  double eps = 1e-5);

}  // namespace vsod::nn
