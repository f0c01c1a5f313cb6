#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mp/rng.hpp"
#include "mp/tensor.hpp"

namespace mp {

template <class S>
struct Parameter {
  Tensor<S> value;
  bool trainable = true;
};

/// Named parameter tensors with per-tensor trainable flags. Initialization is
/// reproducible: each tensor's stream is derived from the store's seed and
/// the tensor name, so adding parameters in a different order does not change
/// values.
template <class S>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  Tensor<S>& add(const std::string& name, Tensor<S> value, bool trainable = true) {
    if (map_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    order_.push_back(name);
    auto [it, _] = map_.emplace(name, Parameter<S>{std::move(value), trainable});
    return it->second.value;
  }

  /// Truncated normal (resampled beyond 2 std), the default weight init.
  Tensor<S>& add_trunc_normal(const std::string& name, std::int64_t rows, std::int64_t cols,
                              double std_dev = 0.02, bool trainable = true) {
    Tensor<S> t(rows, cols);
    RandomSource rng = RandomSource::for_name(seed_, name);
    for (auto& v : t.raw()) v = static_cast<S>(rng.truncated_normal(std_dev));
    return add(name, std::move(t), trainable);
  }

  Tensor<S>& add_zeros(const std::string& name, std::int64_t rows, std::int64_t cols,
                       bool trainable = true) {
    return add(name, Tensor<S>(rows, cols), trainable);
  }

  Tensor<S>& add_ones(const std::string& name, std::int64_t rows, std::int64_t cols,
                      bool trainable = true) {
    return add(name, Tensor<S>::full(rows, cols, S(1)), trainable);
  }

  bool has(const std::string& name) const { return map_.count(name) != 0; }

  Parameter<S>& param(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const Parameter<S>& param(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  Tensor<S>& value(const std::string& name) { return param(name).value; }
  const Tensor<S>& value(const std::string& name) const { return param(name).value; }

  /// Replaces a tensor's contents; the shape must match.
  void set(const std::string& name, Tensor<S> v) {
    Parameter<S>& p = param(name);
    if (!p.value.same_shape(v)) {
      throw ConfigError("parameter " + name + ": shape mismatch " + p.value.shape_str() + " vs " +
                        v.shape_str());
    }
    p.value = std::move(v);
  }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t count() const { return order_.size(); }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += map_.at(name).value.size();
    return n;
  }

  template <class T>
  ParamStore<T> cast() const {
    ParamStore<T> out(seed_);
    for (const auto& name : order_) {
      const Parameter<S>& p = map_.at(name);
      out.add(name, p.value.template cast<T>(), p.trainable);
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Parameter<S>> map_;
};

}  // namespace mp
