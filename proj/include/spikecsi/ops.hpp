// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <type_traits>
#include <vector>

#include "spikecsi/autograd.hpp"
#include "spikecsi/layers.hpp"

/// Tape-recording versions of the layer kernels plus the handful of
/// elementwise glue ops the codec graph needs.
namespace spikecsi::ops {

template <typename T>
using Var = typename Tape<T>::Var;

template <typename T>
using Scalar = std::type_identity_t<T>;

/// `spikes` routes through the event-driven kernel and rejects non-binary input.
enum class InputKind { analog, spikes };

template <typename T>
Var<T> linear(Tape<T>& tape, Linear<T>& layer, Var<T> x, InputKind kind = InputKind::analog);

template <typename T>
Var<T> conv3x3(Tape<T>& tape, Conv3x3<T>& layer, Var<T> x);

template <typename T>
Var<T> batchnorm(Tape<T>& tape, BatchNorm<T>& layer, Var<T> x, Mode mode);

template <typename T>
Var<T> leaky_relu(Tape<T>& tape, Var<T> x, Scalar<T> slope);

template <typename T>
Var<T> add(Tape<T>& tape, Var<T> a, Var<T> b);

template <typename T>
Var<T> sub(Tape<T>& tape, Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Tape<T>& tape, Var<T> a, Scalar<T> c);

/// a + c * b
template <typename T>
Var<T> axpy(Tape<T>& tape, Var<T> a, Scalar<T> c, Var<T> b);

template <typename T>
Var<T> reshape(Tape<T>& tape, Var<T> a, Shape shape);

/// Scalar (shape {1}) sum of squared differences.
template <typename T>
Var<T> squared_error(Tape<T>& tape, Var<T> pred, Var<T> target);

/// Scalar sum_i w_i * x_i over shape-{1} inputs.
template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const std::vector<Var<T>>& xs, const std::vector<T>& weights);

}  // namespace spikecsi::ops
