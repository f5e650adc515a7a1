// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include "spikecsi/codec.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "spikecsi/ops.hpp"

namespace spikecsi {

void CodecConfig::validate() const {
  system.validate();
  lif.validate();
  if (hidden_width == 0) throw ConfigError("decoder hidden width must be positive");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky ReLU slope must lie in (0,1)");
  if (!(lambda_floor > 0.0)) throw ConfigError("lambda floor must be positive");
}

LambdaSchedule LambdaSchedule::unit(std::size_t steps) {
  return LambdaSchedule{std::vector<double>(steps, 1.0), 0};
}

void LambdaSchedule::validate(std::size_t steps, double floor) const {
  if (values.size() != steps) {
    throw ConfigError("lambda schedule has " + std::to_string(values.size()) + " entries, expected " +
                      std::to_string(steps));
  }
  if (values.empty() || values.front() != 1.0) throw ConfigError("lambda[1] must be exactly 1");
  for (double v : values) {
    if (!std::isfinite(v) || v < floor) {
      throw ConfigError("lambda value " + std::to_string(v) + " violates the floor " + std::to_string(floor));
    }
  }
}

std::size_t count_parameters(const CodecConfig& cfg) {
  const std::size_t f = cfg.system.flat_size();
  const std::size_t m = cfg.system.codeword;
  const std::size_t d = cfg.hidden_width;
  // conv 2->4 (+bias), BN(4), conv 4->2 (+bias), BN(2)
  const std::size_t stack = (2 * 4 * 9 + 4) + 2 * 4 + (4 * 2 * 9 + 2) + 2 * 2;
  return cfg.system.time_steps * stack + (f * m + m) + (m * d + d) + (d * f + f) + (m * f + f);
}

template <typename T>
SpikingCodec<T>::SpikingCodec(CodecConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t f = cfg_.system.flat_size();
  const std::size_t m = cfg_.system.codeword;
  const std::size_t d = cfg_.hidden_width;
  for (std::size_t t = 1; t <= cfg_.system.time_steps; ++t) {
    const std::string p = "enc.step" + std::to_string(t) + ".";
    enc_.stacks.push_back(ConvStack<T>{Conv3x3<T>(p + "conv1", 2, 4), BatchNorm<T>(p + "bn1", 4),
                                       Conv3x3<T>(p + "conv2", 4, 2), BatchNorm<T>(p + "bn2", 2)});
  }
  enc_.fc = Linear<T>("enc.fc", f, m);
  dec_.hidden = Linear<T>("dec.hidden", m, d);
  dec_.output = Linear<T>("dec.output", d, f);
  dec_.skip = Linear<T>("dec.skip", m, f);
}

template <typename T>
void SpikingCodec<T>::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& st : enc_.stacks) {
    st.conv1.init_uniform(rng);
    st.conv2.init_uniform(rng);
    for (BatchNorm<T>* bn : {&st.bn1, &st.bn2}) {
      bn->gamma.value.fill(T(1));
      bn->beta.value.fill(T(0));
      bn->running_mean.fill(T(0));
      bn->running_var.fill(T(1));
    }
  }
  enc_.fc.init_uniform(rng);
  dec_.hidden.init_uniform(rng);
  dec_.output.init_uniform(rng);
  dec_.skip.init_uniform(rng);
}

template <typename T>
std::vector<Parameter<T>*> SpikingCodec<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& st : enc_.stacks) {
    for (Parameter<T>* p : {&st.conv1.weight, &st.conv1.bias, &st.bn1.gamma, &st.bn1.beta, &st.conv2.weight,
                            &st.conv2.bias, &st.bn2.gamma, &st.bn2.beta}) {
      out.push_back(p);
    }
  }
  for (Linear<T>* l : {&enc_.fc, &dec_.hidden, &dec_.output, &dec_.skip}) {
    out.push_back(&l->weight);
    if (l->has_bias()) out.push_back(&l->bias);
  }
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> SpikingCodec<T>::parameters() const {
  auto mut = const_cast<SpikingCodec*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::vector<BatchNorm<T>*> SpikingCodec<T>::batchnorms() {
  std::vector<BatchNorm<T>*> out;
  for (auto& st : enc_.stacks) {
    out.push_back(&st.bn1);
    out.push_back(&st.bn2);
  }
  return out;
}

template <typename T>
std::vector<const BatchNorm<T>*> SpikingCodec<T>::batchnorms() const {
  auto mut = const_cast<SpikingCodec*>(this)->batchnorms();
  return {mut.begin(), mut.end()};
}

template <typename T>
std::size_t SpikingCodec<T>::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter<T>* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
void SpikingCodec<T>::zero_grad() {
  for (Parameter<T>* p : parameters()) p->zero_grad();
}

template <typename T>
CodecState<T> SpikingCodec<T>::rest_state(std::size_t batch) const {
  return CodecState<T>{lif_rest<T>({batch, cfg_.system.codeword}, cfg_.lif),
                       lif_rest<T>({batch, cfg_.hidden_width}, cfg_.lif)};
}

template <typename T>
void SpikingCodec<T>::reset_state(CodecState<T>& state) const {
  state.encoder = lif_reset(std::move(state.encoder), cfg_.lif);
  state.decoder = lif_reset(std::move(state.decoder), cfg_.lif);
}

// ---- graph builders ---------------------------------------------------------

template <typename T>
typename Tape<T>::Var record_encode_step(Tape<T>& tape, SpikingCodec<T>& codec, typename Tape<T>::Var x,
                                         std::size_t t, typename Tape<T>::Var& v_enc, const ForwardOptions& opts) {
  const CodecConfig& cfg = codec.config();
  if (t < 1 || t > cfg.system.time_steps) {
    throw IndexError("time step " + std::to_string(t) + " outside 1.." + std::to_string(cfg.system.time_steps));
  }
  const std::size_t batch = tape.value(x).dim(0);
  require_shape(tape.value(x), {batch, 2, cfg.system.n_s, cfg.system.n_t}, "encode_step input");
  ConvStack<T>& st = codec.encoder().stacks[t - 1];
  const T slope = static_cast<T>(cfg.leaky_slope);
  auto a = ops::conv3x3(tape, st.conv1, x);
  a = ops::batchnorm(tape, st.bn1, a, opts.mode);
  a = ops::leaky_relu(tape, a, slope);
  a = ops::conv3x3(tape, st.conv2, a);
  a = ops::batchnorm(tape, st.bn2, a, opts.mode);
  a = ops::leaky_relu(tape, a, slope);
  a = ops::reshape(tape, a, {batch, cfg.system.flat_size()});
  auto current = ops::linear(tape, codec.encoder().fc, a);
  auto lif = lif_step(tape, cfg.lif, v_enc, current, opts.spike_mode, "enc.lif");
  v_enc = lif.v;
  return lif.spikes;
}

template <typename T>
DecodeVars<T> record_decode_step(Tape<T>& tape, SpikingCodec<T>& codec, typename Tape<T>::Var spikes,
                                 typename Tape<T>::Var& v_dec, const ForwardOptions& opts) {
  const CodecConfig& cfg = codec.config();
  const std::size_t batch = tape.value(spikes).dim(0);
  require_shape(tape.value(spikes), {batch, cfg.system.codeword}, "decode_step input");
  const auto kind = opts.spike_mode == SpikeMode::hard ? ops::InputKind::spikes : ops::InputKind::analog;
  DecoderParams<T>& dec = codec.decoder();
  auto current = ops::linear(tape, dec.hidden, spikes, kind);
  auto lif = lif_step(tape, cfg.lif, v_dec, current, opts.spike_mode, "dec.lif");
  v_dec = lif.v;
  auto backbone = ops::linear(tape, dec.output, lif.spikes, kind);
  auto skip = ops::linear(tape, dec.skip, spikes, kind);
  auto y = ops::add(tape, backbone, skip);
  y = ops::reshape(tape, y, {batch, 2, cfg.system.n_s, cfg.system.n_t});
  return DecodeVars<T>{y, lif.spikes};
}

template <typename T>
TraceVars<T> record_feedback(Tape<T>& tape, SpikingCodec<T>& codec, typename Tape<T>::Var h,
                             const LambdaSchedule& lambda, const ForwardOptions& opts) {
  const CodecConfig& cfg = codec.config();
  const std::size_t steps = cfg.system.time_steps;
  const bool progressive = opts.style == FeedbackStyle::progressive;
  if (progressive) lambda.validate(steps, cfg.lambda_floor);
  const Shape frame_shape = tape.value(h).shape();
  const std::size_t batch = frame_shape.at(0);
  require_shape(tape.value(h), {batch, 2, cfg.system.n_s, cfg.system.n_t}, "feedback input");

  CodecState<T> rest = codec.rest_state(batch);
  auto v_enc = tape.constant(std::move(rest.encoder.v), "enc.v0");
  auto v_dec = tape.constant(std::move(rest.decoder.v), "dec.v0");
  auto hbar = tape.constant(Tensor<T>(frame_shape), "hbar0");

  TraceVars<T> tr;
  tr.partial.push_back(hbar);
  for (std::size_t t = 1; t <= steps; ++t) {
    const T lam = progressive ? static_cast<T>(lambda.at(t)) : T(1);
    typename Tape<T>::Var x = h;
    if (progressive) {
      auto residual = ops::sub(tape, h, hbar);
      x = ops::scale(tape, residual, T(1) / lam);
    }
    auto s = record_encode_step(tape, codec, x, t, v_enc, opts);
    auto dv = record_decode_step(tape, codec, s, v_dec, opts);
    hbar = ops::axpy(tape, hbar, lam, dv.output);
    tr.inputs.push_back(x);
    tr.spikes.push_back(s);
    tr.decoder_spikes.push_back(dv.hidden_spikes);
    tr.outputs.push_back(dv.output);
    tr.partial.push_back(hbar);
  }
  return tr;
}

// ---- value-level API ----------------------------------------------------------

template <typename T>
Tensor<T> encode_step(SpikingCodec<T>& codec, const Tensor<T>& x, std::size_t t, CodecState<T>& state, Mode mode) {
  Tape<T> tape(false);
  auto xv = tape.constant(x);
  auto v = tape.constant(state.encoder.v);
  auto s = record_encode_step(tape, codec, xv, t, v, ForwardOptions{mode, SpikeMode::hard});
  state.encoder.v = tape.value(v);
  return tape.value(s);
}

template <typename T>
Tensor<T> decode_step(SpikingCodec<T>& codec, const Tensor<T>& spikes, CodecState<T>& state) {
  Tape<T> tape(false);
  auto sv = tape.constant(spikes);
  auto v = tape.constant(state.decoder.v);
  auto out = record_decode_step(tape, codec, sv, v, ForwardOptions{});
  state.decoder.v = tape.value(v);
  return tape.value(out.output);
}

template <typename T>
FeedbackTrace<T> pr_feedback(SpikingCodec<T>& codec, const Tensor<T>& h, const LambdaSchedule& lambda,
                             const ForwardOptions& opts) {
  Tape<T> tape(false);
  auto hv = tape.constant(h, "H");
  TraceVars<T> vars = record_feedback(tape, codec, hv, lambda, opts);
  FeedbackTrace<T> trace;
  auto collect = [&tape](const auto& vs, std::vector<Tensor<T>>& dst) {
    for (auto v : vs) dst.push_back(tape.value(v));
  };
  collect(vars.spikes, trace.spikes);
  collect(vars.decoder_spikes, trace.decoder_spikes);
  collect(vars.outputs, trace.outputs);
  collect(vars.partial, trace.partial);
  collect(vars.inputs, trace.inputs);
  return trace;
}

template <typename T>
std::vector<Tensor<T>> bs_reconstruct(SpikingCodec<T>& codec, const std::vector<Tensor<T>>& frames,
                                      const LambdaSchedule& lambda, FeedbackStyle style) {
  const CodecConfig& cfg = codec.config();
  const std::size_t steps = cfg.system.time_steps;
  if (frames.size() != steps) {
    throw DimensionError("expected " + std::to_string(steps) + " spike frames, got " + std::to_string(frames.size()));
  }
  const bool progressive = style == FeedbackStyle::progressive;
  if (progressive) lambda.validate(steps, cfg.lambda_floor);
  const std::size_t batch = frames.front().dim(0);
  Tape<T> tape(false);
  auto v_dec = tape.constant(codec.rest_state(batch).decoder.v);
  auto hbar = tape.constant(Tensor<T>({batch, 2, cfg.system.n_s, cfg.system.n_t}));
  std::vector<Tensor<T>> partial{tape.value(hbar)};
  for (std::size_t t = 1; t <= steps; ++t) {
    auto s = tape.constant(frames[t - 1]);
    auto dv = record_decode_step(tape, codec, s, v_dec, ForwardOptions{});
    hbar = ops::axpy(tape, hbar, progressive ? static_cast<T>(lambda.at(t)) : T(1), dv.output);
    partial.push_back(tape.value(hbar));
  }
  return partial;
}

template <typename T>
LambdaSchedule estimate_lambda(SpikingCodec<T>& codec, std::span<const ChannelSample> subset, std::size_t chunk) {
  if (subset.empty()) throw ConfigError("lambda estimation needs a non-empty subset");
  if (chunk == 0) throw ConfigError("lambda estimation chunk must be positive");
  const CodecConfig& cfg = codec.config();
  const std::size_t steps = cfg.system.time_steps;

  struct Chunk {
    Tensor<T> h;
    Tensor<T> hbar;
    CodecState<T> state;
  };
  std::vector<Chunk> chunks;
  for (std::size_t i = 0; i < subset.size(); i += chunk) {
    const std::size_t n = std::min(chunk, subset.size() - i);
    Tensor<T> h = to_batch<T>(subset.subspan(i, n));
    Tensor<T> hbar(h.shape());
    chunks.push_back(Chunk{std::move(h), std::move(hbar), codec.rest_state(n)});
  }

  double reference = 0.0;
  for (const Chunk& c : chunks) {
    for (T v : c.h.values()) reference += static_cast<double>(v) * static_cast<double>(v);
  }
  if (!std::isfinite(reference)) throw NumericError("lambda estimation subset holds a non-finite value");
  if (!(reference > 0.0)) throw ConfigError("lambda estimation subset has zero energy");

  LambdaSchedule sched;
  sched.subset_size = subset.size();
  const ForwardOptions opts{Mode::eval, SpikeMode::hard, FeedbackStyle::progressive};
  for (std::size_t t = 1; t <= steps; ++t) {
    double lam = 1.0;
    if (t > 1) {
      double residual = 0.0;
      for (const Chunk& c : chunks) {
        for (std::size_t k = 0; k < c.h.size(); ++k) {
          const double d = static_cast<double>(c.h[k]) - static_cast<double>(c.hbar[k]);
          residual += d * d;
        }
      }
      lam = std::max(std::sqrt(residual / reference), cfg.lambda_floor);
    }
    sched.values.push_back(lam);
    if (t == steps) break;
    const T lam_t = static_cast<T>(lam);
    for (Chunk& c : chunks) {
      Tape<T> tape(false);
      auto h = tape.constant(c.h);
      auto hbar = tape.constant(c.hbar);
      auto v_enc = tape.constant(c.state.encoder.v);
      auto v_dec = tape.constant(c.state.decoder.v);
      auto x = ops::scale(tape, ops::sub(tape, h, hbar), T(1) / lam_t);
      auto s = record_encode_step(tape, codec, x, t, v_enc, opts);
      auto dv = record_decode_step(tape, codec, s, v_dec, opts);
      hbar = ops::axpy(tape, hbar, lam_t, dv.output);
      c.hbar = tape.value(hbar);
      c.state.encoder.v = tape.value(v_enc);
      c.state.decoder.v = tape.value(v_dec);
    }
  }
  return sched;
}

std::size_t feedback_bits(const SystemConfig& cfg) {
  cfg.validate();
  return cfg.time_steps * cfg.codeword;
}

// ---- batching and wire format ---------------------------------------------------

template <typename T>
Tensor<T> to_batch(std::span<const ChannelSample> samples) {
  if (samples.empty()) throw DimensionError("cannot batch zero samples");
  const std::size_t rows = samples.front().rows, cols = samples.front().cols;
  const std::size_t plane = rows * cols;
  Tensor<T> out({samples.size(), 2, rows, cols});
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const ChannelSample& s = samples[b];
    if (s.rows != rows || s.cols != cols) throw DimensionError("batch samples differ in shape");
    T* dst = out.data() + b * 2 * plane;
    std::copy(s.real.begin(), s.real.end(), dst);
    std::copy(s.imag.begin(), s.imag.end(), dst + plane);
  }
  return out;
}

template <typename T>
ChannelSample sample_from_batch(const Tensor<T>& batch, std::size_t index) {
  if (batch.rank() != 4 || batch.dim(1) != 2) throw DimensionError("expected a B x 2 x N_s x N_t batch");
  if (index >= batch.dim(0)) throw IndexError("batch index out of range");
  ChannelSample s(batch.dim(2), batch.dim(3));
  const std::size_t plane = s.size();
  const T* src = batch.data() + index * 2 * plane;
  for (std::size_t i = 0; i < plane; ++i) {
    s.real[i] = static_cast<float>(src[i]);
    s.imag[i] = static_cast<float>(src[plane + i]);
  }
  return s;
}

template <typename T>
std::vector<std::uint8_t> pack_spikes(std::span<const T> frame) {
  std::vector<std::uint8_t> out((frame.size() + 7) / 8, 0);
  for (std::size_t j = 0; j < frame.size(); ++j) {
    if (frame[j] == T(1)) {
      out[j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
    } else if (frame[j] != T(0)) {
      throw ContractError("cannot pack a non-binary spike frame");
    }
  }
  return out;
}

template <typename T>
std::vector<T> unpack_spikes(std::span<const std::uint8_t> bytes, std::size_t width) {
  if (bytes.size() != (width + 7) / 8) throw DimensionError("packed frame length does not match width");
  std::vector<T> out(width);
  for (std::size_t j = 0; j < width; ++j) out[j] = (bytes[j / 8] >> (j % 8)) & 1u ? T(1) : T(0);
  return out;
}

template <typename T>
std::vector<std::uint8_t> encode_codeword(const FeedbackTrace<T>& trace, std::size_t index) {
  std::vector<std::uint8_t> out;
  for (const Tensor<T>& frame : trace.spikes) {
    const std::size_t width = frame.dim(1);
    if (index >= frame.dim(0)) throw IndexError("codeword sample index out of range");
    auto packed = pack_spikes<T>(std::span<const T>(frame.data() + index * width, width));
    out.insert(out.end(), packed.begin(), packed.end());
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> decode_codeword(std::span<const std::uint8_t> bytes, std::size_t width, std::size_t steps) {
  const std::size_t frame_bytes = (width + 7) / 8;
  if (bytes.size() != frame_bytes * steps) {
    throw DimensionError("codeword holds " + std::to_string(bytes.size()) + " bytes, expected " +
                         std::to_string(frame_bytes * steps));
  }
  std::vector<Tensor<T>> frames;
  for (std::size_t t = 0; t < steps; ++t) {
    frames.emplace_back(Shape{1, width}, unpack_spikes<T>(bytes.subspan(t * frame_bytes, frame_bytes), width));
  }
  return frames;
}

#define SPIKECSI_INSTANTIATE(T)                                                                                    \
  template class SpikingCodec<T>;                                                                                  \
  template typename Tape<T>::Var record_encode_step(Tape<T>&, SpikingCodec<T>&, typename Tape<T>::Var, std::size_t, \
                                                    typename Tape<T>::Var&, const ForwardOptions&);               \
  template DecodeVars<T> record_decode_step(Tape<T>&, SpikingCodec<T>&, typename Tape<T>::Var,                    \
                                            typename Tape<T>::Var&, const ForwardOptions&);                       \
  template TraceVars<T> record_feedback(Tape<T>&, SpikingCodec<T>&, typename Tape<T>::Var, const LambdaSchedule&,  \
                                        const ForwardOptions&);                                                    \
  template Tensor<T> encode_step(SpikingCodec<T>&, const Tensor<T>&, std::size_t, CodecState<T>&, Mode);           \
  template Tensor<T> decode_step(SpikingCodec<T>&, const Tensor<T>&, CodecState<T>&);                              \
  template FeedbackTrace<T> pr_feedback(SpikingCodec<T>&, const Tensor<T>&, const LambdaSchedule&,                 \
                                        const ForwardOptions&);                                                    \
  template std::vector<Tensor<T>> bs_reconstruct(SpikingCodec<T>&, const std::vector<Tensor<T>>&,                  \
                                                 const LambdaSchedule&, FeedbackStyle);                            \
  template LambdaSchedule estimate_lambda(SpikingCodec<T>&, std::span<const ChannelSample>, std::size_t);          \
  template Tensor<T> to_batch(std::span<const ChannelSample>);                                                     \
  template ChannelSample sample_from_batch(const Tensor<T>&, std::size_t);                                         \
  template std::vector<std::uint8_t> pack_spikes(std::span<const T>);                                              \
  template std::vector<T> unpack_spikes(std::span<const std::uint8_t>, std::size_t);                               \
  template std::vector<std::uint8_t> encode_codeword(const FeedbackTrace<T>&, std::size_t);                        \
  template std::vector<Tensor<T>> decode_codeword(std::span<const std::uint8_t>, std::size_t, std::size_t);

SPIKECSI_INSTANTIATE(float)
SPIKECSI_INSTANTIATE(double)
#undef SPIKECSI_INSTANTIATE

}  // namespace spikecsi
