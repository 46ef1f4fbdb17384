#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metasched/tensor.hpp"

namespace metasched {

// Named parameter tensors in a fixed registration order; gradients are
// reported as a vector aligned with this order.
class ParamStore {
 public:
  int add(std::string name, Tensor value);
  int size() const { return static_cast<int>(values_.size()); }
  Tensor& value(int i) { return values_[i]; }
  const Tensor& value(int i) const { return values_[i]; }
  const std::string& name(int i) const { return names_[i]; }
  std::size_t num_scalars() const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

struct AdamWConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

// Decoupled weight decay: p <- p*(1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps).
// Moment accumulators are kept in double, one slot per parameter scalar.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  const AdamWConfig& config() const { return cfg_; }
  long steps() const { return step_; }

  // grads[i] must match params.value(i) in shape; throws on mismatch or
  // non-finite gradients.
  void step(ParamStore& params, const std::vector<Tensor>& grads);

  void reset();

 private:
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long step_ = 0;
};

}  // namespace metasched
