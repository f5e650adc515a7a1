// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikecsi/autograd.hpp"
#include "spikecsi/channel.hpp"
#include "spikecsi/layers.hpp"
#include "spikecsi/lif.hpp"

namespace spikecsi {

struct CodecConfig {
  SystemConfig system;
  std::size_t hidden_width = 4096;  // decoder LIF width D (8192 for the L variant)
  LifConfig lif;
  double leaky_slope = 0.3;
  double lambda_floor = 1e-4;

  void validate() const;
};

/// Residual scale factors lambda[1..T], stored zero-based.
struct LambdaSchedule {
  std::vector<double> values;
  std::size_t subset_size = 0;  // samples used to estimate it; 0 for the unit schedule

  static LambdaSchedule unit(std::size_t steps);
  void validate(std::size_t steps, double floor) const;
  double at(std::size_t t) const { return values.at(t - 1); }  // 1-based
};

/// `progressive` encodes successive residuals; `static_input` feeds the raw
/// channel at every step with unit scaling (the no-residual ablation).
enum class FeedbackStyle { progressive, static_input };

struct ForwardOptions {
  Mode mode = Mode::eval;
  SpikeMode spike_mode = SpikeMode::hard;
  FeedbackStyle style = FeedbackStyle::progressive;
};

template <typename T>
struct ConvStack {
  Conv3x3<T> conv1;  // 2 -> 4 channels
  BatchNorm<T> bn1;
  Conv3x3<T> conv2;  // 4 -> 2 channels
  BatchNorm<T> bn2;
};

template <typename T>
struct EncoderParams {
  std::vector<ConvStack<T>> stacks;  // one per time step
  Linear<T> fc;                      // 2 N_s N_t -> M, shared across steps
};

template <typename T>
struct DecoderParams {
  Linear<T> hidden;  // M -> D, feeds the decoder LIF layer
  Linear<T> output;  // D -> 2 N_s N_t
  Linear<T> skip;    // M -> 2 N_s N_t
};

/// Membrane potentials carried across the T steps of one batch of samples.
template <typename T>
struct CodecState {
  LifState<T> encoder;  // B x M
  LifState<T> decoder;  // B x D
};

template <typename T>
struct FeedbackTrace {
  std::vector<Tensor<T>> spikes;          // s[t], B x M
  std::vector<Tensor<T>> decoder_spikes;  // B x D
  std::vector<Tensor<T>> outputs;         // y[t], B x 2 x N_s x N_t
  std::vector<Tensor<T>> partial;         // H-bar[0..T]
  std::vector<Tensor<T>> inputs;          // X[t] fed to the encoder

  const Tensor<T>& final() const { return partial.back(); }
};

template <typename T>
class SpikingCodec {
 public:
  explicit SpikingCodec(CodecConfig cfg);

  /// Fan-in uniform weights; batch-norm scale 1, shift 0.
  void initialize(std::uint64_t seed);

  const CodecConfig& config() const { return cfg_; }
  EncoderParams<T>& encoder() { return enc_; }
  const EncoderParams<T>& encoder() const { return enc_; }
  DecoderParams<T>& decoder() { return dec_; }
  const DecoderParams<T>& decoder() const { return dec_; }

  /// Fixed order: per-step conv stacks, encoder FC, hidden, output, skip.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::vector<BatchNorm<T>*> batchnorms();
  std::vector<const BatchNorm<T>*> batchnorms() const;
  std::size_t parameter_count() const;
  void zero_grad();

  CodecState<T> rest_state(std::size_t batch) const;
  void reset_state(CodecState<T>& state) const;

 private:
  CodecConfig cfg_;
  EncoderParams<T> enc_;
  DecoderParams<T> dec_;
};

/// Learnable-parameter total of the architecture, without building it.
std::size_t count_parameters(const CodecConfig& cfg);

// ---- graph builders (recorded on a tape) --------------------------------

template <typename T>
struct TraceVars {
  std::vector<typename Tape<T>::Var> spikes, decoder_spikes, outputs, partial, inputs;
};

template <typename T>
struct DecodeVars {
  typename Tape<T>::Var output;         // y[t], B x 2 x N_s x N_t
  typename Tape<T>::Var hidden_spikes;  // B x D
};

/// Conv stack t (1-based) -> flatten -> shared FC -> LIF. Updates `v_enc`.
template <typename T>
typename Tape<T>::Var record_encode_step(Tape<T>& tape, SpikingCodec<T>& codec, typename Tape<T>::Var x,
                                         std::size_t t, typename Tape<T>::Var& v_enc, const ForwardOptions& opts);

/// hidden FC -> LIF -> output FC, plus the skip FC. Updates `v_dec`.
template <typename T>
DecodeVars<T> record_decode_step(Tape<T>& tape, SpikingCodec<T>& codec, typename Tape<T>::Var spikes,
                                 typename Tape<T>::Var& v_dec, const ForwardOptions& opts);

/// Full T-step feedback loop from rest states; `h` is B x 2 x N_s x N_t.
template <typename T>
TraceVars<T> record_feedback(Tape<T>& tape, SpikingCodec<T>& codec, typename Tape<T>::Var h,
                             const LambdaSchedule& lambda, const ForwardOptions& opts);

// ---- value-level API ------------------------------------------------------

template <typename T>
Tensor<T> encode_step(SpikingCodec<T>& codec, const Tensor<T>& x, std::size_t t, CodecState<T>& state,
                      Mode mode = Mode::eval);

/// Rejects non-binary frames with ContractError.
template <typename T>
Tensor<T> decode_step(SpikingCodec<T>& codec, const Tensor<T>& spikes, CodecState<T>& state);

/// UT-side loop: the encoder plus the virtual decoder used to form residuals.
template <typename T>
FeedbackTrace<T> pr_feedback(SpikingCodec<T>& codec, const Tensor<T>& h, const LambdaSchedule& lambda,
                             const ForwardOptions& opts = {});

/// BS-side reconstruction from received frames: H-bar[0..T].
template <typename T>
std::vector<Tensor<T>> bs_reconstruct(SpikingCodec<T>& codec, const std::vector<Tensor<T>>& frames,
                                      const LambdaSchedule& lambda, FeedbackStyle style = FeedbackStyle::progressive);

/// Sequential estimate: lambda[t] = sqrt(sum ||R[t]||^2 / sum ||H||^2) over
/// `subset`, with lambda[1..t-1] fixed while running to step t. Eval mode.
template <typename T>
LambdaSchedule estimate_lambda(SpikingCodec<T>& codec, std::span<const ChannelSample> subset,
                               std::size_t chunk = 200);

/// T * M: one bit per spike per step.
std::size_t feedback_bits(const SystemConfig& cfg);

// ---- batching and wire format ---------------------------------------------

template <typename T>
Tensor<T> to_batch(std::span<const ChannelSample> samples);

template <typename T>
ChannelSample sample_from_batch(const Tensor<T>& batch, std::size_t index);

/// Spikes packed LSB-first into ceil(M/8) bytes.
template <typename T>
std::vector<std::uint8_t> pack_spikes(std::span<const T> frame);

template <typename T>
std::vector<T> unpack_spikes(std::span<const std::uint8_t> bytes, std::size_t width);

/// Codeword of sample `index`: T frames of ceil(M/8) bytes each.
template <typename T>
std::vector<std::uint8_t> encode_codeword(const FeedbackTrace<T>& trace, std::size_t index);

/// Inverse of encode_codeword for a single sample; frames are 1 x M.
template <typename T>
std::vector<Tensor<T>> decode_codeword(std::span<const std::uint8_t> bytes, std::size_t width, std::size_t steps);

}  // namespace spikecsi
