// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include "spikecsi/layers.hpp"

#include <Eigen/Core>
#include <cmath>

namespace spikecsi {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void fill_uniform(Tensor<T>& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (T& x : t.values()) x = static_cast<T>(dist(rng));
}

template <typename T>
void check_fc_input(const Linear<T>& layer, const Tensor<T>& input, std::string_view where) {
  if (input.rank() != 2 || input.dim(1) != layer.in_features()) {
    throw DimensionError(std::string(where) + ": input " + to_string(input.shape()) +
                         " does not match layer width " + std::to_string(layer.in_features()));
  }
}

}  // namespace

template <typename T>
Linear<T>::Linear(const std::string& name, std::size_t in, std::size_t out, bool with_bias)
    : weight(name + ".weight", Tensor<T>({out, in})) {
  if (with_bias) bias = Parameter<T>(name + ".bias", Tensor<T>({out}));
}

template <typename T>
void Linear<T>::init_uniform(std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_features()));
  fill_uniform(weight.value, bound, rng);
  if (has_bias()) fill_uniform(bias.value, bound, rng);
}

template <typename T>
Conv3x3<T>::Conv3x3(const std::string& name, std::size_t in_channels, std::size_t out_channels)
    : weight(name + ".weight", Tensor<T>({out_channels, in_channels, 3, 3})),
      bias(name + ".bias", Tensor<T>({out_channels})) {}

template <typename T>
void Conv3x3<T>::init_uniform(std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_channels() * 9));
  fill_uniform(weight.value, bound, rng);
  fill_uniform(bias.value, bound, rng);
}

template <typename T>
BatchNorm<T>::BatchNorm(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", Tensor<T>({channels}, T(1))),
      beta(name + ".beta", Tensor<T>({channels})),
      running_mean({channels}),
      running_var({channels}, T(1)) {}

template <typename T>
Tensor<T> fc_apply(const Linear<T>& layer, const Tensor<T>& input) {
  check_fc_input(layer, input, "fc_apply");
  const auto batch = static_cast<Eigen::Index>(input.dim(0));
  const auto in = static_cast<Eigen::Index>(layer.in_features());
  const auto out_f = static_cast<Eigen::Index>(layer.out_features());
  Tensor<T> out({input.dim(0), layer.out_features()});
  Eigen::Map<const RowMatrix<T>> x(input.data(), batch, in);
  Eigen::Map<const RowMatrix<T>> w(layer.weight.value.data(), out_f, in);
  Eigen::Map<RowMatrix<T>> y(out.data(), batch, out_f);
  y.noalias() = x * w.transpose();
  if (layer.has_bias()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(layer.bias.value.data(), out_f);
    y.rowwise() += b;
  }
  require_finite(out, layer.weight.name);
  return out;
}

namespace detail {

template <typename T>
std::vector<std::vector<std::size_t>> active_indices(const Tensor<T>& spikes, std::string_view where) {
  const std::size_t batch = spikes.dim(0);
  const std::size_t width = spikes.size() / std::max<std::size_t>(batch, 1);
  std::vector<std::vector<std::size_t>> active(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = spikes.data() + b * width;
    for (std::size_t j = 0; j < width; ++j) {
      if (row[j] == T(1)) {
        active[b].push_back(j);
      } else if (row[j] != T(0)) {
        throw ContractError(std::string(where) + ": spike input is not binary");
      }
    }
  }
  return active;
}

}  // namespace detail

template <typename T>
Tensor<T> spike_fc_apply(const Linear<T>& layer, const Tensor<T>& spikes) {
  check_fc_input(layer, spikes, "spike_fc_apply");
  const auto active = detail::active_indices(spikes, layer.weight.name);
  const std::size_t in = layer.in_features();
  const std::size_t out_f = layer.out_features();
  const T* w = layer.weight.value.data();
  Tensor<T> out({spikes.dim(0), out_f});
  for (std::size_t b = 0; b < active.size(); ++b) {
    T* y = out.data() + b * out_f;
    for (std::size_t o = 0; o < out_f; ++o) {
      T acc = layer.has_bias() ? layer.bias.value[o] : T(0);
      const T* w_row = w + o * in;
      for (std::size_t j : active[b]) acc += w_row[j];
      y[o] = acc;
    }
  }
  require_finite(out, layer.weight.name);
  return out;
}

template <typename T>
Tensor<T> conv3x3_apply(const Conv3x3<T>& layer, const Tensor<T>& input) {
  if (input.rank() != 4 || input.dim(1) != layer.in_channels()) {
    throw DimensionError("conv3x3_apply: input " + to_string(input.shape()) + " does not have " +
                         std::to_string(layer.in_channels()) + " channels");
  }
  const std::size_t batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t c_out = layer.out_channels();
  const std::size_t plane = h * w;
  Tensor<T> out({batch, c_out, h, w});
  const T* kernel = layer.weight.value.data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      T* dst = out.data() + (b * c_out + co) * plane;
      std::fill(dst, dst + plane, layer.bias.value[co]);
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const T* src = input.data() + (b * c_in + ci) * plane;
        const T* k = kernel + (co * c_in + ci) * 9;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            const T wv = k[ky * 3 + kx];
            // Output rows/cols whose tap lands inside the image.
            const std::size_t y0 = ky == 0 ? 1 : 0, y1 = ky == 2 ? h - 1 : h;
            const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? w - 1 : w;
            for (std::size_t y = y0; y < y1; ++y) {
              const T* s = src + (y + ky - 1) * w;
              T* d = dst + y * w;
              for (std::size_t x = x0; x < x1; ++x) d[x] += wv * s[x + kx - 1];
            }
          }
        }
      }
    }
  }
  require_finite(out, layer.weight.name);
  return out;
}

namespace detail {

template <typename T>
BatchNormForward<T> batchnorm_forward(BatchNorm<T>& layer, const Tensor<T>& input, Mode mode) {
  if (input.rank() < 2 || input.dim(1) != layer.channels()) {
    throw DimensionError("batchnorm_apply: input " + to_string(input.shape()) + " does not have " +
                         std::to_string(layer.channels()) + " channels");
  }
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t plane = input.size() / (batch * channels);
  const std::size_t count = batch * plane;
  if (mode == Mode::train && count < 2) {
    throw ContractError("batchnorm_apply: train mode needs at least 2 values per channel");
  }

  BatchNormForward<T> fwd{Tensor<T>(input.shape()), Tensor<T>(input.shape()), std::vector<T>(channels)};
  for (std::size_t c = 0; c < channels; ++c) {
    T mean, var;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* x = input.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += x[i];
      }
      const double m = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* x = input.data() + (b * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) sq += (x[i] - m) * (x[i] - m);
      }
      const double v = sq / static_cast<double>(count);
      mean = static_cast<T>(m);
      var = static_cast<T>(v);
      const T unbiased = static_cast<T>(v * static_cast<double>(count) / static_cast<double>(count - 1));
      layer.running_mean[c] = (T(1) - layer.momentum) * layer.running_mean[c] + layer.momentum * mean;
      layer.running_var[c] = (T(1) - layer.momentum) * layer.running_var[c] + layer.momentum * unbiased;
    } else {
      mean = layer.running_mean[c];
      var = layer.running_var[c];
    }
    const T inv_std = T(1) / std::sqrt(var + layer.eps);
    fwd.inv_std[c] = inv_std;
    const T g = layer.gamma.value[c], beta = layer.beta.value[c];
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (input[off + i] - mean) * inv_std;
        fwd.normalized[off + i] = xh;
        fwd.output[off + i] = g * xh + beta;
      }
    }
  }
  require_finite(fwd.output, layer.gamma.name);
  return fwd;
}

}  // namespace detail

template <typename T>
Tensor<T> batchnorm_apply(BatchNorm<T>& layer, const Tensor<T>& input, Mode mode) {
  return detail::batchnorm_forward(layer, input, mode).output;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const T x = input[i];
    out[i] = x >= T(0) ? x : slope * x;
  }
  return out;
}

#define SPIKECSI_INSTANTIATE(T)                                                                      \
  template struct Linear<T>;                                                                         \
  template struct Conv3x3<T>;                                                                        \
  template struct BatchNorm<T>;                                                                      \
  template Tensor<T> fc_apply(const Linear<T>&, const Tensor<T>&);                                   \
  template Tensor<T> spike_fc_apply(const Linear<T>&, const Tensor<T>&);                             \
  template Tensor<T> conv3x3_apply(const Conv3x3<T>&, const Tensor<T>&);                             \
  template Tensor<T> batchnorm_apply(BatchNorm<T>&, const Tensor<T>&, Mode);                         \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                                \
  template detail::BatchNormForward<T> detail::batchnorm_forward(BatchNorm<T>&, const Tensor<T>&, Mode); \
  template std::vector<std::vector<std::size_t>> detail::active_indices(const Tensor<T>&, std::string_view);

SPIKECSI_INSTANTIATE(float)
SPIKECSI_INSTANTIATE(double)
#undef SPIKECSI_INSTANTIATE

}  // namespace spikecsi
