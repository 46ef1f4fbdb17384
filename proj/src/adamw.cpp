#include "metasched/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace metasched {

int ParamStore::add(std::string name, Tensor value) {
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
  return static_cast<int>(values_.size()) - 1;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += v.size();
  return n;
}

void AdamW::reset() {
  m_.clear();
  v_.clear();
  step_ = 0;
}

void AdamW::step(ParamStore& params, const std::vector<Tensor>& grads) {
  if (static_cast<int>(grads.size()) != params.size()) {
    throw std::invalid_argument("adamw: gradient count mismatch");
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (int i = 0; i < params.size(); ++i) {
      m_[i].assign(params.value(i).size(), 0.0);
      v_[i].assign(params.value(i).size(), 0.0);
    }
  }
  for (int i = 0; i < params.size(); ++i) {
    if (!grads[i].same_shape(params.value(i))) {
      throw std::invalid_argument("adamw: gradient shape mismatch for " + params.name(i));
    }
    ensure_finite(grads[i], "adamw gradient");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
  for (int i = 0; i < params.size(); ++i) {
    Tensor& p = params.value(i);
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < p.data.size(); ++j) {
      const double gj = g.data[j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      const double updated =
          static_cast<double>(p.data[j]) * (1.0 - cfg_.lr * cfg_.weight_decay) - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      p.data[j] = static_cast<float>(updated);
    }
    ensure_finite(p, "adamw parameter");
  }
}

}  // namespace metasched
