#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gsapool/tensor.hpp"

namespace gsapool {

/// Named collection of trainable tensors with stable iteration order.
class ParameterSet {
 public:
  /// Registers a tensor under a unique name and returns it.
  Tensor add(const std::string& name, Tensor t);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const {
    return index_.count(name) != 0;
  }
  std::size_t size() const { return items_.size(); }

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

  void zero_grad();

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

  // Flat binary checkpoint: magic "GSAP", version u32, then per parameter
  // {name length u32, name bytes, ndim u32, dims u64..., values f64...},
  // all little-endian.
  void save_checkpoint(const std::string& path) const;
  static ParameterSet load_checkpoint(const std::string& path);

  /// Copies values from `other` by name; every name must match.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Adam with bias correction. Weight decay is added to the gradient
/// (coupled L2). Moment state persists across step() calls.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8, double weight_decay = 0.0);

  void step(ParameterSet& params);
  void reset();

  long steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  long t_ = 0;
  std::vector<Moments> state_;
};

}  // namespace gsapool
