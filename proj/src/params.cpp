#include "vsod/params.hpp"

#include <cmath>

namespace vsod::nn {

Var& ParamRegistry::add(const std::string& name, Tensor value) {
  require(!name.empty(), "parameter name must be non-empty");
  auto [it, inserted] = params_.try_emplace(name, Var(std::move(value), true));
  require(inserted, "duplicate parameter name: " + name);
  return it->second;
}

const Var& ParamRegistry::get(const std::string& name) const {
  auto it = params_.find(name);
  require(it != params_.end(), "unknown parameter: " + name);
  return it->second;
}

Var& ParamRegistry::get(const std::string& name) {
  auto it = params_.find(name);
  require(it != params_.end(), "unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParamRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamRegistry::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, v] : params_) n += v.value().size();
  return n;
}

void ParamRegistry::zero_grad() {
  for (auto& [_, v] : params_) v.zero_grad();
}

ParamRegistry ParamRegistry::clone() const {
  ParamRegistry out;
  for (const auto& [name, v] : params_) out.add(name, v.value());
  return out;
}

void ParamRegistry::assign_from(const ParamRegistry& other, const std::string& prefix) {
  for (const auto& [name, v] : other) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    auto it = params_.find(name);
    if (it == params_.end()) {
      add(name, v.value());
    } else {
      require(it->second.shape() == v.shape(), "assign_from: shape mismatch for " + name + ": " +
                                                   shape_str(it->second.shape()) + " vs " +
                                                   shape_str(v.shape()));
      it->second.mutable_value() = v.value();
    }
  }
}

Tensor uniform(Shape shape, Scalar bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = static_cast<Scalar>(dist(rng));
  return t;
}

Tensor he_uniform(Shape shape, Rng& rng) {
  require(shape.size() >= 2, "he_uniform: expected at least [out,in], got " + shape_str(shape));
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  const Scalar bound = static_cast<Scalar>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  return uniform(std::move(shape), bound, rng);
}

}  // namespace vsod::nn
