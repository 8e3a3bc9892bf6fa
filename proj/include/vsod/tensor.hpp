#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace vsod {

#ifdef VSOD_SINGLE_PRECISION
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<int>;

/// Raised for every contract violation (shape mismatch, bad config, I/O).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw Error(message);
}

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major N-d array. Value semantics; no views.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0));
  Tensor(Shape shape, std::vector<Scalar> values);

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }
  std::span<Scalar> values() & noexcept { return values_; }
  std::span<const Scalar> values() const& noexcept { return values_; }
  // A span into a temporary would dangle.
  std::span<const Scalar> values() const&& = delete;

  Scalar& operator[](std::size_t i) { return values_[i]; }
  Scalar operator[](std::size_t i) const { return values_[i]; }

  // [C,H,W] accessors; no bounds checks beyond debug asserts.
  Scalar& at(int c, int y, int x) {
    return values_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  Scalar at(int c, int y, int x) const {
    return values_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  Tensor reshaped(Shape shape) const;
  void fill(Scalar v);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  // Fixed 64-byte alignment: Eigen's vectorized reductions peel according to the
  // runtime alignment, so unaligned storage makes sums vary from run to run.
  using Storage = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;
  struct Adopt {};
  Tensor(Adopt, Shape shape, Storage values);

  Shape shape_;
  Storage values_;
};

/// Max |a - b| over all entries; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Channel slice [c0, c0 + count) of a [C,H,W] tensor.
Tensor channel_slice(const Tensor& t, int c0, int count);

}  // namespace vsod
