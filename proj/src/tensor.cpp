#include "vsod/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vsod {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    require(d > 0, "non-positive extent in shape " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, Scalar fill)
    : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<Scalar> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  require(values_.size() == shape_numel(shape_),
          "value count " + std::to_string(values_.size()) + " does not match shape " +
              shape_str(shape_));
}

int Tensor::dim(int axis) const {
  if (axis < 0) axis += rank();
  require(axis >= 0 && axis < rank(),
          "axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape_));
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
  require(shape_numel(shape) == values_.size(),
          "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(Adopt{}, std::move(shape), values_);
}

Tensor::Tensor(Adopt, Shape shape, Storage values) : shape_(std::move(shape)), values_(std::move(values)) {}

void Tensor::fill(Scalar v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](Scalar v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(),
          "max_abs_diff: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

Tensor channel_slice(const Tensor& t, int c0, int count) {
  require(t.rank() == 3, "channel_slice expects [C,H,W], got " + shape_str(t.shape()));
  require(c0 >= 0 && count > 0 && c0 + count <= t.dim(0), "channel_slice out of range");
  const std::size_t plane = static_cast<std::size_t>(t.dim(1)) * t.dim(2);
  Tensor out({count, t.dim(1), t.dim(2)});
  std::copy_n(t.data() + c0 * plane, count * plane, out.data());
  return out;
}

}  // namespace vsod
