// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include "spikecsi/lif.hpp"

#include <cmath>
#include <numbers>

namespace spikecsi {

void LifConfig::validate() const {
  if (!(tau > 1.0)) throw ConfigError("LIF tau must be > 1, got " + std::to_string(tau));
  if (!(v_th > v_reset)) throw ConfigError("LIF threshold must exceed the reset potential");
  if (!(surrogate_width > 0.0)) throw ConfigError("surrogate width must be positive");
}

template <typename T>
LifState<T> lif_rest(const Shape& shape, const LifConfig& cfg) {
  return LifState<T>{Tensor<T>(shape, static_cast<T>(cfg.v_reset))};
}

template <typename T>
LifState<T> lif_reset(LifState<T> state, const LifConfig& cfg) {
  state.v.fill(static_cast<T>(cfg.v_reset));
  return state;
}

namespace {

template <typename T>
void check_step_inputs(const LifState<T>& state, const Tensor<T>& current) {
  require_shape(current, state.v.shape(), "lif_step current");
  require_finite(current, "lif_step current");
}

}  // namespace

template <typename T>
LifStepResult<T> lif_step(const LifConfig& cfg, const LifState<T>& state, const Tensor<T>& current) {
  check_step_inputs(state, current);
  const T decay = static_cast<T>(cfg.decay());
  const T v_th = static_cast<T>(cfg.v_th);
  const T v_reset = static_cast<T>(cfg.v_reset);
  LifStepResult<T> r{Tensor<T>(current.shape()), LifState<T>{Tensor<T>(current.shape())}};
  for (std::size_t i = 0; i < current.size(); ++i) {
    const T v_minus = decay * state.v[i] + current[i];
    const T s = v_minus >= v_th ? T(1) : T(0);
    r.spikes[i] = s;
    r.state.v[i] = v_minus * (T(1) - s) + v_reset * s;
  }
  return r;
}

template <typename T>
T smooth_spike(T v_minus, const LifConfig& cfg) {
  const T k = static_cast<T>(std::numbers::pi * cfg.surrogate_width / 2.0);
  return std::atan(k * (v_minus - static_cast<T>(cfg.v_th))) / std::numbers::pi_v<T> + T(0.5);
}

template <typename T>
T surrogate_grad(T v_minus, const LifConfig& cfg) {
  const T k = static_cast<T>(std::numbers::pi * cfg.surrogate_width / 2.0);
  const T x = k * (v_minus - static_cast<T>(cfg.v_th));
  return static_cast<T>(cfg.surrogate_width / 2.0) / (T(1) + x * x);
}

template <typename T>
Tensor<T> surrogate_grad(const Tensor<T>& v_minus, const LifConfig& cfg) {
  Tensor<T> out(v_minus.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = surrogate_grad(v_minus[i], cfg);
  return out;
}

template <typename T>
LifStepResult<T> lif_step_smooth(const LifConfig& cfg, const LifState<T>& state, const Tensor<T>& current) {
  check_step_inputs(state, current);
  const T decay = static_cast<T>(cfg.decay());
  const T v_reset = static_cast<T>(cfg.v_reset);
  LifStepResult<T> r{Tensor<T>(current.shape()), LifState<T>{Tensor<T>(current.shape())}};
  for (std::size_t i = 0; i < current.size(); ++i) {
    const T v_minus = decay * state.v[i] + current[i];
    const T s = smooth_spike(v_minus, cfg);
    r.spikes[i] = s;
    r.state.v[i] = v_minus * (T(1) - s) + v_reset * s;
  }
  return r;
}

template <typename T>
LifVars<T> lif_step(Tape<T>& tape, const LifConfig& cfg, typename Tape<T>::Var v_prev,
                    typename Tape<T>::Var current, SpikeMode mode, const std::string& label) {
  using Var = typename Tape<T>::Var;
  const Tensor<T>& i_val = tape.value(current);
  LifState<T> prev{tape.value(v_prev)};
  LifStepResult<T> step = mode == SpikeMode::hard ? lif_step(cfg, prev, i_val) : lif_step_smooth(cfg, prev, i_val);

  // Backward needs v- and the emitted spike values.
  const T decay = static_cast<T>(cfg.decay());
  Tensor<T> v_minus(i_val.shape());
  for (std::size_t k = 0; k < v_minus.size(); ++k) v_minus[k] = decay * prev.v[k] + i_val[k];

  typename Tape<T>::BackwardFn fn = [cfg, mode, decay, v_minus = std::move(v_minus), s = step.spikes](
                                        Tape<T>& tp, std::span<const Var> in, std::span<const Var> out) {
    const Tensor<T>* g_s = tp.grad_if_any(out[0]);
    const Tensor<T>* g_v = tp.grad_if_any(out[1]);
    if (!g_s && !g_v) return;
    const T v_reset = static_cast<T>(cfg.v_reset);
    Tensor<T> d_vm(v_minus.shape());
    for (std::size_t k = 0; k < d_vm.size(); ++k) {
      const T sg = surrogate_grad(v_minus[k], cfg);
      T d = T(0);
      if (g_s) d += (*g_s)[k] * sg;
      if (g_v) {
        d += (*g_v)[k] * (T(1) - s[k]);
        if (mode == SpikeMode::smooth) d += (*g_v)[k] * (v_reset - v_minus[k]) * sg;
      }
      d_vm[k] = d;
    }
    if (tp.requires_grad(in[0])) {
      Tensor<T>& gv = tp.grad_buffer(in[0]);
      for (std::size_t k = 0; k < gv.size(); ++k) gv[k] += decay * d_vm[k];
    }
    if (tp.requires_grad(in[1])) {
      Tensor<T>& gi = tp.grad_buffer(in[1]);
      for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += d_vm[k];
    }
  };

  std::vector<Tensor<T>> outs;
  outs.push_back(std::move(step.spikes));
  outs.push_back(std::move(step.state.v));
  auto vars = tape.record(label, std::move(outs), {v_prev, current}, false, std::move(fn));
  return LifVars<T>{vars[0], vars[1]};
}

#define SPIKECSI_INSTANTIATE(T)                                                                          \
  template LifState<T> lif_rest(const Shape&, const LifConfig&);                                         \
  template LifState<T> lif_reset(LifState<T>, const LifConfig&);                                         \
  template LifStepResult<T> lif_step(const LifConfig&, const LifState<T>&, const Tensor<T>&);            \
  template LifStepResult<T> lif_step_smooth(const LifConfig&, const LifState<T>&, const Tensor<T>&);     \
  template T surrogate_grad(T, const LifConfig&);                                                        \
  template Tensor<T> surrogate_grad(const Tensor<T>&, const LifConfig&);                                 \
  template T smooth_spike(T, const LifConfig&);                                                          \
  template LifVars<T> lif_step(Tape<T>&, const LifConfig&, typename Tape<T>::Var, typename Tape<T>::Var, \
                               SpikeMode, const std::string&);

SPIKECSI_INSTANTIATE(float)
SPIKECSI_INSTANTIATE(double)
#undef SPIKECSI_INSTANTIATE

}  // namespace spikecsi
