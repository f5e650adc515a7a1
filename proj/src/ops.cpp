// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include "spikecsi/ops.hpp"

#include <Eigen/Core>

namespace spikecsi::ops {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
using Fn = typename Tape<T>::BackwardFn;
template <typename T>
using Vars = std::span<const Var<T>>;

template <typename T>
void require_same_shape(const Tape<T>& tape, Var<T> a, Var<T> b, const char* where) {
  require_shape(tape.value(b), tape.value(a).shape(), where);
}

// gW += gY^T X, gb += colsum(gY), for dense inputs.
template <typename T>
void linear_param_grads_dense(Linear<T>& layer, const Tensor<T>& g, const Tensor<T>& x) {
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  const auto in = static_cast<Eigen::Index>(layer.in_features());
  const auto out_f = static_cast<Eigen::Index>(layer.out_features());
  ConstMatMap<T> gy(g.data(), batch, out_f);
  ConstMatMap<T> xm(x.data(), batch, in);
  MatMap<T> gw(layer.weight.grad.data(), out_f, in);
  gw.noalias() += gy.transpose() * xm;
  if (layer.has_bias()) {
    // Plain loop: Eigen's vectorized reduction peels by address alignment,
    // which makes the summation order (and the last bits) vary run to run.
    T* gb = layer.bias.grad.data();
    for (Eigen::Index b = 0; b < batch; ++b) {
      const T* row = g.data() + b * out_f;
      for (Eigen::Index o = 0; o < out_f; ++o) gb[o] += row[o];
    }
  }
}

// Same sums restricted to the active spike columns.
template <typename T>
void linear_param_grads_spikes(Linear<T>& layer, const Tensor<T>& g, const Tensor<T>& x) {
  const auto active = detail::active_indices(x, layer.weight.name);
  const std::size_t in = layer.in_features();
  const std::size_t out_f = layer.out_features();
  T* gw = layer.weight.grad.data();
  for (std::size_t o = 0; o < out_f; ++o) {
    T* row = gw + o * in;
    for (std::size_t b = 0; b < active.size(); ++b) {
      const T gv = g[b * out_f + o];
      if (gv == T(0)) continue;
      for (std::size_t j : active[b]) row[j] += gv;
    }
  }
  if (layer.has_bias()) {
    T* gb = layer.bias.grad.data();
    for (std::size_t b = 0; b < active.size(); ++b) {
      for (std::size_t o = 0; o < out_f; ++o) gb[o] += g[b * out_f + o];
    }
  }
}

}  // namespace

template <typename T>
Var<T> linear(Tape<T>& tape, Linear<T>& layer, Var<T> x, InputKind kind) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out = kind == InputKind::spikes ? spike_fc_apply(layer, xv) : fc_apply(layer, xv);
  Linear<T>* lp = &layer;
  Fn<T> fn = [lp, kind](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g) return;
    const Tensor<T>& xin = tp.value(in[0]);
    if (kind == InputKind::spikes) {
      linear_param_grads_spikes(*lp, *g, xin);
    } else {
      linear_param_grads_dense(*lp, *g, xin);
    }
    if (tp.requires_grad(in[0])) {
      const auto batch = static_cast<Eigen::Index>(xin.dim(0));
      const auto in_f = static_cast<Eigen::Index>(lp->in_features());
      const auto out_f = static_cast<Eigen::Index>(lp->out_features());
      ConstMatMap<T> gy(g->data(), batch, out_f);
      ConstMatMap<T> w(lp->weight.value.data(), out_f, in_f);
      MatMap<T> gx(tp.grad_buffer(in[0]).data(), batch, in_f);
      gx.noalias() += gy * w;
    }
  };
  return tape.record(layer.weight.name, std::move(out), {x}, true, std::move(fn));
}

template <typename T>
Var<T> conv3x3(Tape<T>& tape, Conv3x3<T>& layer, Var<T> x) {
  Tensor<T> out = conv3x3_apply(layer, tape.value(x));
  Conv3x3<T>* lp = &layer;
  Fn<T> fn = [lp](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g) return;
    const Tensor<T>& xin = tp.value(in[0]);
    const bool want_input = tp.requires_grad(in[0]);
    T* gin = want_input ? tp.grad_buffer(in[0]).data() : nullptr;
    const std::size_t batch = xin.dim(0), c_in = xin.dim(1), h = xin.dim(2), w = xin.dim(3);
    const std::size_t c_out = lp->out_channels();
    const std::size_t plane = h * w;
    const T* kernel = lp->weight.value.data();
    T* gk = lp->weight.grad.data();
    T* gb = lp->bias.grad.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t co = 0; co < c_out; ++co) {
        const T* gy = g->data() + (b * c_out + co) * plane;
        T bsum = T(0);
        for (std::size_t i = 0; i < plane; ++i) bsum += gy[i];
        gb[co] += bsum;
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          const T* src = xin.data() + (b * c_in + ci) * plane;
          T* gsrc = want_input ? gin + (b * c_in + ci) * plane : nullptr;
          const std::size_t kbase = (co * c_in + ci) * 9;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? h - 1 : h;
              const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? w - 1 : w;
              const T wv = kernel[kbase + ky * 3 + kx];
              T acc = T(0);
              for (std::size_t y = y0; y < y1; ++y) {
                const std::size_t srow = (y + ky - 1) * w;
                const T* grow = gy + y * w;
                for (std::size_t xx = x0; xx < x1; ++xx) {
                  acc += grow[xx] * src[srow + xx + kx - 1];
                  if (gsrc) gsrc[srow + xx + kx - 1] += wv * grow[xx];
                }
              }
              gk[kbase + ky * 3 + kx] += acc;
            }
          }
        }
      }
    }
  };
  return tape.record(layer.weight.name, std::move(out), {x}, true, std::move(fn));
}

template <typename T>
Var<T> batchnorm(Tape<T>& tape, BatchNorm<T>& layer, Var<T> x, Mode mode) {
  auto fwd = detail::batchnorm_forward(layer, tape.value(x), mode);
  BatchNorm<T>* lp = &layer;
  Fn<T> fn = [lp, mode, xhat = std::move(fwd.normalized), inv_std = std::move(fwd.inv_std)](
                 Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g) return;
    const std::size_t batch = xhat.dim(0), channels = xhat.dim(1);
    const std::size_t plane = xhat.size() / (batch * channels);
    const double count = static_cast<double>(batch * plane);
    const bool want_input = tp.requires_grad(in[0]);
    T* gx = want_input ? tp.grad_buffer(in[0]).data() : nullptr;
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_g = 0.0, sum_gxh = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_g += (*g)[off + i];
          sum_gxh += static_cast<double>((*g)[off + i]) * xhat[off + i];
        }
      }
      lp->gamma.grad[c] += static_cast<T>(sum_gxh);
      lp->beta.grad[c] += static_cast<T>(sum_g);
      if (!gx) continue;
      const double gamma = lp->gamma.value[c];
      const double is = inv_std[c];
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t off = (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          if (mode == Mode::train) {
            gx[off + i] += static_cast<T>(gamma * is / count *
                                          (count * (*g)[off + i] - sum_g - xhat[off + i] * sum_gxh));
          } else {
            gx[off + i] += static_cast<T>(gamma * is * (*g)[off + i]);
          }
        }
      }
    }
  };
  return tape.record(layer.gamma.name, std::move(fwd.output), {x}, true, std::move(fn));
}

template <typename T>
Var<T> leaky_relu(Tape<T>& tape, Var<T> x, Scalar<T> slope) {
  Tensor<T> out = spikecsi::leaky_relu(tape.value(x), slope);
  Fn<T> fn = [slope](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g || !tp.requires_grad(in[0])) return;
    const Tensor<T>& xv = tp.value(in[0]);
    Tensor<T>& gx = tp.grad_buffer(in[0]);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += xv[i] >= T(0) ? (*g)[i] : slope * (*g)[i];
  };
  return tape.record("leaky_relu", std::move(out), {x}, false, std::move(fn));
}

template <typename T>
Var<T> axpy(Tape<T>& tape, Var<T> a, Scalar<T> c, Var<T> b) {
  require_same_shape(tape, a, b, "axpy");
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + c * bv[i];
  Fn<T> fn = [c](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g) return;
    if (tp.requires_grad(in[0])) {
      Tensor<T>& ga = tp.grad_buffer(in[0]);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i];
    }
    if (tp.requires_grad(in[1])) {
      Tensor<T>& gb = tp.grad_buffer(in[1]);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += c * (*g)[i];
    }
  };
  return tape.record("axpy", std::move(out), {a, b}, false, std::move(fn));
}

template <typename T>
Var<T> add(Tape<T>& tape, Var<T> a, Var<T> b) {
  require_same_shape(tape, a, b, "add");
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  Fn<T> fn = [](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g) return;
    for (Var<T> v : in) {
      if (!tp.requires_grad(v)) continue;
      Tensor<T>& gv = tp.grad_buffer(v);
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += (*g)[i];
    }
  };
  return tape.record("add", std::move(out), {a, b}, false, std::move(fn));
}

template <typename T>
Var<T> sub(Tape<T>& tape, Var<T> a, Var<T> b) {
  require_same_shape(tape, a, b, "sub");
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  Fn<T> fn = [](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g) return;
    if (tp.requires_grad(in[0])) {
      Tensor<T>& ga = tp.grad_buffer(in[0]);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i];
    }
    if (tp.requires_grad(in[1])) {
      Tensor<T>& gb = tp.grad_buffer(in[1]);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= (*g)[i];
    }
  };
  return tape.record("sub", std::move(out), {a, b}, false, std::move(fn));
}

template <typename T>
Var<T> scale(Tape<T>& tape, Var<T> a, Scalar<T> c) {
  const Tensor<T>& av = tape.value(a);
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  Fn<T> fn = [c](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g || !tp.requires_grad(in[0])) return;
    Tensor<T>& ga = tp.grad_buffer(in[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * (*g)[i];
  };
  return tape.record("scale", std::move(out), {a}, false, std::move(fn));
}

template <typename T>
Var<T> reshape(Tape<T>& tape, Var<T> a, Shape shape) {
  Tensor<T> out = tape.value(a).reshaped(std::move(shape));
  Fn<T> fn = [](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g || !tp.requires_grad(in[0])) return;
    Tensor<T>& ga = tp.grad_buffer(in[0]);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i];
  };
  return tape.record("reshape", std::move(out), {a}, false, std::move(fn));
}

template <typename T>
Var<T> squared_error(Tape<T>& tape, Var<T> pred, Var<T> target) {
  require_same_shape(tape, pred, target, "squared_error");
  const Tensor<T>& p = tape.value(pred);
  const Tensor<T>& t = tape.value(target);
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    acc += d * d;
  }
  Tensor<T> out({1}, static_cast<T>(acc));
  require_finite(out, "squared_error");
  Fn<T> fn = [](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g) return;
    const Tensor<T>& pv = tp.value(in[0]);
    const Tensor<T>& tv = tp.value(in[1]);
    const T g0 = (*g)[0];
    if (tp.requires_grad(in[0])) {
      Tensor<T>& gp = tp.grad_buffer(in[0]);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += T(2) * (pv[i] - tv[i]) * g0;
    }
    if (tp.requires_grad(in[1])) {
      Tensor<T>& gt = tp.grad_buffer(in[1]);
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= T(2) * (pv[i] - tv[i]) * g0;
    }
  };
  return tape.record("squared_error", std::move(out), {pred, target}, false, std::move(fn));
}

template <typename T>
Var<T> weighted_sum(Tape<T>& tape, const std::vector<Var<T>>& xs, const std::vector<T>& weights) {
  if (xs.size() != weights.size()) {
    throw DimensionError("weighted_sum: " + std::to_string(xs.size()) + " inputs but " +
                         std::to_string(weights.size()) + " weights");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require_shape(tape.value(xs[i]), Shape{1}, "weighted_sum");
    acc += static_cast<double>(weights[i]) * tape.value(xs[i])[0];
  }
  Fn<T> fn = [weights](Tape<T>& tp, Vars<T> in, Vars<T> out_vars) {
    const Tensor<T>* g = tp.grad_if_any(out_vars[0]);
    if (!g) return;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (tp.requires_grad(in[i])) tp.grad_buffer(in[i])[0] += weights[i] * (*g)[0];
    }
  };
  return tape.record("weighted_sum", Tensor<T>({1}, static_cast<T>(acc)), xs, false, std::move(fn));
}

#define SPIKECSI_INSTANTIATE(T)                                                             \
  template Var<T> linear(Tape<T>&, Linear<T>&, Var<T>, InputKind);                          \
  template Var<T> conv3x3(Tape<T>&, Conv3x3<T>&, Var<T>);                                   \
  template Var<T> batchnorm(Tape<T>&, BatchNorm<T>&, Var<T>, Mode);                         \
  template Var<T> leaky_relu(Tape<T>&, Var<T>, Scalar<T>);                                  \
  template Var<T> add(Tape<T>&, Var<T>, Var<T>);                                            \
  template Var<T> sub(Tape<T>&, Var<T>, Var<T>);                                            \
  template Var<T> scale(Tape<T>&, Var<T>, Scalar<T>);                                       \
  template Var<T> axpy(Tape<T>&, Var<T>, Scalar<T>, Var<T>);                                \
  template Var<T> reshape(Tape<T>&, Var<T>, Shape);                                         \
  template Var<T> squared_error(Tape<T>&, Var<T>, Var<T>);                                  \
  template Var<T> weighted_sum(Tape<T>&, const std::vector<Var<T>>&, const std::vector<T>&);

SPIKECSI_INSTANTIATE(float)
SPIKECSI_INSTANTIATE(double)
#undef SPIKECSI_INSTANTIATE

}  // namespace spikecsi::ops
