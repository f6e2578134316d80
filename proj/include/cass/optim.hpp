#pragma once

// Adam with decoupled weight decay, operating on a fixed list of parameter
// tensors. m and v live in the state, aligned index-for-index with the
// parameter list.

#include <cmath>
#include <vector>

#include "cass/core.hpp"
#include "cass/tensor.hpp"

namespace cass {

struct AdamState {
  std::int64_t step = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-6;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void reset(const std::vector<Tensor>& params) {
    step = 0;
    m.assign(params.size(), {});
    v.assign(params.size(), {});
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i].assign(params[i].size(), 0.0);
      v[i].assign(params[i].size(), 0.0);
    }
  }
};

// One update over all parameters. Gradients are read from each tensor's
// grad buffer; a parameter that never received one is an error. The caller
// zeroes gradients between steps.
inline void adam_step(std::vector<Tensor>& params, AdamState& st) {
  check(st.lr > 0.0, "adam: lr must be positive");
  check(st.beta1 >= 0.0 && st.beta1 < 1.0 && st.beta2 >= 0.0 && st.beta2 < 1.0,
        "adam: betas must lie in [0, 1)");
  if (st.m.size() != params.size()) st.reset(params);
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    check(p.has_grad(), "adam: parameter has no gradient");
    const auto& g = p.grad();
    auto& m = st.m[i];
    auto& v = st.v[i];
    check(m.size() == p.size(), "adam: state/parameter shape mismatch");
    auto& w = p.mutable_data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k];
      if (!std::isfinite(gk)) throw numeric_error("adam: non-finite gradient");
      m[k] = st.beta1 * m[k] + (1.0 - st.beta1) * gk;
      v[k] = st.beta2 * v[k] + (1.0 - st.beta2) * gk * gk;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      w[k] -= st.lr * mhat / (std::sqrt(vhat) + st.eps);
      w[k] -= st.lr * st.weight_decay * w[k];
    }
  }
}

}  // namespace cass
