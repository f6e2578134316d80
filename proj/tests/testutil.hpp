#pragma once

// Test-only helpers: random tensor construction and the central
// finite-difference gradient oracle used to check every autodiff op. The
// oracle evaluates the forward pass with recording disabled, so it stays
// independent of the backward implementation it verifies.

#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "cass/core.hpp"
#include "cass/tensor.hpp"

namespace casstest {

inline cass::Tensor random_tensor(int rows, int cols, cass::Rng& rng,
                                  double lo = -1.0, double hi = 1.0,
                                  bool requires_grad = true) {
  std::vector<double> v(std::size_t(rows) * cols);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return cass::Tensor::from_data(rows, cols, std::move(v), requires_grad);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central finite differences on every (or a sampled subset of) parameter
// coordinate vs. the analytic gradient from one backward pass.
inline void expect_gradients_match(std::vector<cass::Tensor> params,
                                   const std::function<cass::Tensor()>& forward,
                                   double tol = 1e-5, double h = 1e-6,
                                   int max_per_param = 256,
                                   std::uint64_t sample_seed = 42) {
  for (auto& p : params) p.zero_grad();
  {
    cass::Graph graph;
    cass::Graph::Scope scope(graph);
    cass::Tensor loss = forward();
    ASSERT_EQ(loss.size(), 1u) << "forward must produce a scalar";
    graph.backward(loss);
  }
  auto eval = [&forward]() {
    cass::Graph::NoGrad ng;
    return forward().item();
  };
  cass::Rng pick(sample_seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    ASSERT_TRUE(p.has_grad()) << "parameter " << pi << " received no gradient";
    const auto analytic = p.grad();
    const int n = static_cast<int>(p.size());
    const int checks = std::min(n, max_per_param);
    for (int c = 0; c < checks; ++c) {
      const int k = (n <= max_per_param) ? c : pick.uniform_int(n);
      auto& data = p.mutable_data();
      const double saved = data[k];
      data[k] = saved + h;
      const double fp = eval();
      data[k] = saved - h;
      const double fm = eval();
      data[k] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      EXPECT_LE(rel_err(analytic[k], numeric), tol)
          << "param " << pi << " index " << k << ": analytic=" << analytic[k]
          << " numeric=" << numeric;
    }
  }
}

}  // namespace casstest
