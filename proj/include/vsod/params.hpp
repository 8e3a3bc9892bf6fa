#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "vsod/autograd.hpp"

namespace vsod::nn {

using Rng = std::mt19937_64;

/// Named trainable tensors. Iteration is lexicographic by name.
class ParamRegistry {
 public:
  /// Registers a new parameter; duplicate names are rejected.
  Var& add(const std::string& name, Tensor value);
  const Var& get(const std::string& name) const;
  Var& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const noexcept { return params_.size(); }
  std::vector<std::string> names() const;
  std::size_t num_values() const;

  void zero_grad();
  /// Deep copy: new leaf nodes with copied values and no grads.
  ParamRegistry clone() const;
  /// Copies every parameter of `other` whose name starts with `prefix` (shapes must match
  /// where the name already exists; missing names are added).
  void assign_from(const ParamRegistry& other, const std::string& prefix = "");

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Var> params_;
};

/// Conv kernel [out, in, k, k] drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor he_uniform(Shape shape, Rng& rng);
Tensor uniform(Shape shape, Scalar bound, Rng& rng);

}  // namespace vsod::nn
