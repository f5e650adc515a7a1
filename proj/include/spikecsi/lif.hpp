// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include "spikecsi/autograd.hpp"
#include "spikecsi/tensor.hpp"

namespace spikecsi {

/// Leaky integrate-and-fire parameters. `tau` is dimensionless (time steps).
struct LifConfig {
  double tau = 2.0;
  double v_th = 1.0;
  double v_reset = 0.0;
  double surrogate_width = 2.0;  // arctangent sharpness, backward only

  void validate() const;
  double decay() const { return 1.0 - 1.0 / tau; }

  friend bool operator==(const LifConfig&, const LifConfig&) = default;
};

/// `hard` emits Heaviside spikes with the surrogate derivative in backward.
/// `smooth` replaces the Heaviside with the surrogate primal in forward so the
/// whole network is differentiable (used for finite-difference checks).
enum class SpikeMode { hard, smooth };

/// Post-reset membrane potentials v[t-1], one per neuron per batch row.
template <typename T>
struct LifState {
  Tensor<T> v;
};

template <typename T>
struct LifStepResult {
  Tensor<T> spikes;  // binary in hard mode, in (0,1) in smooth mode
  LifState<T> state;
};

template <typename T>
LifState<T> lif_rest(const Shape& shape, const LifConfig& cfg);

template <typename T>
LifState<T> lif_reset(LifState<T> state, const LifConfig& cfg);

/// One discrete step: charge v- = (1 - 1/tau) v + i, fire when v- >= v_th,
/// reset fired neurons to v_reset.
template <typename T>
LifStepResult<T> lif_step(const LifConfig& cfg, const LifState<T>& state, const Tensor<T>& current);

template <typename T>
LifStepResult<T> lif_step_smooth(const LifConfig& cfg, const LifState<T>& state, const Tensor<T>& current);

/// d spike / d v-: derivative of atan(pi w x / 2) / pi + 1/2 at x = v- - v_th.
template <typename T>
T surrogate_grad(T v_minus, const LifConfig& cfg);

template <typename T>
Tensor<T> surrogate_grad(const Tensor<T>& v_minus, const LifConfig& cfg);

/// The surrogate primal atan(pi w x / 2) / pi + 1/2.
template <typename T>
T smooth_spike(T v_minus, const LifConfig& cfg);

template <typename T>
struct LifVars {
  typename Tape<T>::Var spikes;
  typename Tape<T>::Var v;
};

/// Recorded LIF step. In hard mode the reset gate is detached: gradients
/// reach v- only through the surrogate at the spike output and through the
/// (1 - s) pass-through of the membrane.
template <typename T>
LifVars<T> lif_step(Tape<T>& tape, const LifConfig& cfg, typename Tape<T>::Var v_prev,
                    typename Tape<T>::Var current, SpikeMode mode, const std::string& label = "lif");

}  // namespace spikecsi
