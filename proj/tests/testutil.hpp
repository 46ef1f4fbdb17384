#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "metasched/adamw.hpp"
#include "metasched/autodiff.hpp"
#include "metasched/tensor.hpp"

namespace testutil {

// Central finite differences against reverse-mode gradients. `loss_fn` must
// rebuild the whole forward pass from the current parameter values and return
// the scalar loss. Relative tolerance with a small absolute floor so
// legitimately zero gradients (dead ReLUs) do not fail the relative check.
struct GradCheckResult {
  bool ok = true;
  std::string detail;
  double worst_rel = 0.0;
};

inline GradCheckResult gradcheck(metasched::ParamStore& params,
                                 const std::function<double()>& loss_fn,
                                 const std::function<std::vector<metasched::Tensor>()>& grad_fn,
                                 double h = 1e-3, double rtol = 1e-3, double atol = 1e-4) {
  GradCheckResult res;
  const std::vector<metasched::Tensor> grads = grad_fn();
  for (int p = 0; p < params.size(); ++p) {
    metasched::Tensor& t = params.value(p);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
      const float orig = t.data[i];
      t.data[i] = static_cast<float>(orig + h);
      const double up = loss_fn();
      t.data[i] = static_cast<float>(orig - h);
      const double down = loss_fn();
      t.data[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads[p].data[i];
      const double err = std::abs(fd - an);
      const double rel = err / std::max({std::abs(fd), std::abs(an), 1e-12});
      if (err > atol && rel > rtol) {
        res.ok = false;
        res.detail = params.name(p) + "[" + std::to_string(i) + "]: fd=" + std::to_string(fd) +
                     " an=" + std::to_string(an);
        res.worst_rel = std::max(res.worst_rel, rel);
        return res;
      }
      if (err > atol) res.worst_rel = std::max(res.worst_rel, rel);
    }
  }
  return res;
}

}  // namespace testutil
