// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "spikecsi/tensor.hpp"

namespace spikecsi {

enum class Mode { train, eval };

/// A learnable tensor and its accumulated gradient (same shape).
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string name_, Tensor<T> value_)
      : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Fully connected layer, weight stored out x in.
template <typename T>
struct Linear {
  Parameter<T> weight;
  Parameter<T> bias;  // empty when the layer has no bias

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, bool with_bias = true);

  std::size_t in_features() const { return weight.value.dim(1); }
  std::size_t out_features() const { return weight.value.dim(0); }
  bool has_bias() const { return !bias.value.empty(); }

  /// Uniform in +-sqrt(1/fan_in) for weight and bias.
  void init_uniform(std::mt19937_64& rng);
};

/// 3x3 convolution, stride 1, zero padding 1. Weight is Cout x Cin x 3 x 3.
template <typename T>
struct Conv3x3 {
  Parameter<T> weight;
  Parameter<T> bias;

  Conv3x3() = default;
  Conv3x3(const std::string& name, std::size_t in_channels, std::size_t out_channels);

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0); }

  void init_uniform(std::mt19937_64& rng);
};

/// Per-channel batch normalization over (batch, spatial) positions.
template <typename T>
struct BatchNorm {
  Parameter<T> gamma;
  Parameter<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels);

  std::size_t channels() const { return gamma.value.size(); }
};

/// out[b] = W * input[b] + bias, input B x M_in.
template <typename T>
Tensor<T> fc_apply(const Linear<T>& layer, const Tensor<T>& input);

/// Same contract as fc_apply for binary inputs, computed by summing the weight
/// columns selected by active spikes in ascending index order. The result for
/// one row does not depend on the rest of the batch.
template <typename T>
Tensor<T> spike_fc_apply(const Linear<T>& layer, const Tensor<T>& spikes);

template <typename T>
Tensor<T> conv3x3_apply(const Conv3x3<T>& layer, const Tensor<T>& input);

/// Train mode normalizes by batch statistics and updates the running
/// statistics; eval mode normalizes by the running statistics.
template <typename T>
Tensor<T> batchnorm_apply(BatchNorm<T>& layer, const Tensor<T>& input, Mode mode);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, T slope);

namespace detail {

// Shared with the tape ops so forward values are computed by one code path.
template <typename T>
struct BatchNormForward {
  Tensor<T> output;
  Tensor<T> normalized;      // x-hat
  std::vector<T> inv_std;    // per channel
};

template <typename T>
BatchNormForward<T> batchnorm_forward(BatchNorm<T>& layer, const Tensor<T>& input, Mode mode);

/// Validates binarity and returns active indices per batch row.
template <typename T>
std::vector<std::vector<std::size_t>> active_indices(const Tensor<T>& spikes, std::string_view where);

}  // namespace detail

}  // namespace spikecsi
