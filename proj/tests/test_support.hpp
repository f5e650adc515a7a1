// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spikecsi/autograd.hpp"
#include "spikecsi/layers.hpp"

namespace spikecsi::testing {

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// |a - b| / max(|a|, |b|, floor); the floor keeps vanishing gradients from
// turning roundoff into large relative errors.
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

using ScalarFn = std::function<double()>;

inline double central_difference(double& x, const ScalarFn& f, double h = 1e-5) {
  const double old = x;
  x = old + h;
  const double fp = f();
  x = old - h;
  const double fm = f();
  x = old;
  return (fp - fm) / (2.0 * h);
}

// Worst relative error between `analytic` and central differences of `f`
// over every element of `value`.
inline double worst_fd_error(Tensor<double>& value, const Tensor<double>& analytic, const ScalarFn& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < value.size(); ++i) {
    worst = std::max(worst, rel_err(analytic[i], central_difference(value[i], f)));
  }
  return worst;
}

}  // namespace spikecsi::testing
