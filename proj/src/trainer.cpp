// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include "spikecsi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"
#include "spikecsi/ops.hpp"

namespace spikecsi {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (augment && phases == 0) throw ConfigError("augmentation needs at least one phase");
  if (lambda_subset == 0) throw ConfigError("lambda_subset must be positive");
  if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
}

template <typename T>
void adam_step(std::span<Parameter<T>* const> params, AdamState<T>& state, double lr, const AdamConfig& cfg) {
  if (state.m.empty()) {
    for (const Parameter<T>* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("Adam state does not match the parameter list");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i];
    Tensor<T>& m = state.m[i];
    Tensor<T>& v = state.v[i];
    if (m.shape() != p.value.shape()) throw DimensionError("Adam moment shape mismatch for " + p.name);
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const T g = p.grad[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[k]) / c1;
      const double vhat = static_cast<double>(v[k]) / c2;
      p.value[k] = static_cast<T>(static_cast<double>(p.value[k]) - lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double base_lr) {
  if (epoch >= total_epochs) {
    throw RangeError("epoch " + std::to_string(epoch) + " outside schedule of " + std::to_string(total_epochs));
  }
  const double frac = static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

template <typename T>
double sq_dist(const T* a, const T* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

// Adds per-sample ||est - h||^2 / ||h||^2 into `sum`.
template <typename T>
void accumulate_nmse(const Tensor<T>& est, const Tensor<T>& h, double& sum) {
  require_shape(est, h.shape(), "nmse");
  const std::size_t batch = h.dim(0), n = h.size() / batch;
  const std::vector<T> zero(n, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    const double ref = sq_dist(h.data() + b * n, zero.data(), n);
    if (!(ref > 0.0)) throw MetricError("nmse: reference channel has zero norm");
    sum += sq_dist(est.data() + b * n, h.data() + b * n, n) / ref;
  }
}

}  // namespace

template <typename T>
double pr_loss(std::span<const Tensor<T>> partial, const Tensor<T>& h, double alpha) {
  if (partial.size() < 2) throw StateError("loss needs a trace with at least one completed step");
  const std::size_t steps = partial.size() - 1;
  const std::size_t batch = h.dim(0);
  double total = 0.0;
  for (std::size_t t = 1; t <= steps; ++t) {
    require_shape(partial[t], h.shape(), "loss");
    const double e = sq_dist(partial[t].data(), h.data(), h.size());
    total += (t == steps ? 1.0 : alpha) * e;
  }
  return total / static_cast<double>(batch);
}

template <typename T>
typename Tape<T>::Var record_loss(Tape<T>& tape, const TraceVars<T>& trace, typename Tape<T>::Var h, double alpha) {
  if (trace.partial.size() < 2) throw StateError("loss needs a trace with at least one completed step");
  const std::size_t steps = trace.partial.size() - 1;
  const double inv_b = 1.0 / static_cast<double>(tape.value(h).dim(0));
  std::vector<typename Tape<T>::Var> errors;
  std::vector<T> weights;
  for (std::size_t t = 1; t <= steps; ++t) {
    errors.push_back(ops::squared_error(tape, trace.partial[t], h));
    weights.push_back(static_cast<T>((t == steps ? 1.0 : alpha) * inv_b));
  }
  return ops::weighted_sum(tape, errors, weights);
}

template <typename T>
EvalResult evaluate(SpikingCodec<T>& codec, std::span<const ChannelSample> data, const LambdaSchedule& lambda,
                    FeedbackStyle style, std::size_t batch) {
  if (data.empty()) throw ConfigError("evaluation dataset is empty");
  if (batch == 0) throw ConfigError("evaluation batch must be positive");
  const std::size_t steps = codec.config().system.time_steps;
  std::vector<double> sums(steps, 0.0);
  const ForwardOptions opts{Mode::eval, SpikeMode::hard, style};
  for (std::size_t i = 0; i < data.size(); i += batch) {
    const Tensor<T> h = to_batch<T>(data.subspan(i, std::min(batch, data.size() - i)));
    const FeedbackTrace<T> tr = pr_feedback(codec, h, lambda, opts);
    for (std::size_t t = 1; t <= steps; ++t) accumulate_nmse(tr.partial[t], h, sums[t - 1]);
  }
  EvalResult r;
  r.samples = data.size();
  for (double s : sums) {
    const double lin = s / static_cast<double>(data.size());
    r.step_nmse_linear.push_back(lin);
    r.step_nmse_db.push_back(linear_to_db(lin));
  }
  r.final_nmse_db = r.step_nmse_db.back();
  return r;
}

// ---- trainer -------------------------------------------------------------------

template <typename T>
Trainer<T>::Trainer(SpikingCodec<T>& codec, TrainConfig cfg)
    : codec_(codec),
      cfg_(cfg),
      lambda_(LambdaSchedule::unit(codec.config().system.time_steps)),
      rng_(cfg.seed) {
  cfg_.validate();
}

template <typename T>
void Trainer<T>::refresh_lambda(std::span<const ChannelSample> data) {
  if (cfg_.style == FeedbackStyle::static_input) {
    lambda_ = LambdaSchedule::unit(codec_.config().system.time_steps);
    return;
  }
  lambda_ = estimate_lambda(codec_, data.first(std::min(cfg_.lambda_subset, data.size())));
}

template <typename T>
EpochMetrics Trainer<T>::train_epoch(std::span<const ChannelSample> data) {
  if (data.empty()) throw ConfigError("training needs at least one sample");
  const std::size_t steps = codec_.config().system.time_steps;
  EpochMetrics metrics;
  metrics.epoch = epoch_;
  metrics.lr = cosine_lr(epoch_, cfg_.epochs, cfg_.learning_rate);
  try {
    refresh_lambda(data);
  } catch (const NumericError& e) {
    throw NumericError("epoch " + std::to_string(epoch_) + ", lambda estimation: " + e.what());
  }
  metrics.lambda = lambda_.values;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng_);

  auto params = codec_.parameters();
  const ForwardOptions opts{Mode::train, SpikeMode::hard, cfg_.style};
  std::vector<double> nmse(steps, 0.0);
  double loss_sum = 0.0;
  std::size_t seen = 0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_index) {
    const std::size_t n = std::min(cfg_.batch_size, order.size() - start);
    std::vector<ChannelSample> batch;
    batch.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      const ChannelSample& s = data[order[start + k]];
      batch.push_back(cfg_.augment ? augment_phase(s, cfg_.phases, rng_) : s);
    }
    const Tensor<T> h = to_batch<T>(batch);

    auto where = [&] {
      return "epoch " + std::to_string(epoch_) + ", batch " + std::to_string(batch_index);
    };
    Tape<T> tape;
    typename Tape<T>::Var loss;
    TraceVars<T> trace;
    try {
      auto hv = tape.constant(h, "H");
      trace = record_feedback(tape, codec_, hv, lambda_, opts);
      loss = record_loss(tape, trace, hv, cfg_.alpha);
    } catch (const NumericError& e) {
      const auto label = tape.first_non_finite();
      throw NumericError(where() + ": non-finite value in " + (label ? *label : std::string("forward")) + " (" +
                         e.what() + ")");
    }
    const double loss_value = static_cast<double>(tape.value(loss)[0]);
    if (!std::isfinite(loss_value)) throw NumericError(where() + ": non-finite loss");

    codec_.zero_grad();
    tape.backward(loss, Tensor<T>({1}, T(1)));

    double norm2 = 0.0;
    for (const Parameter<T>* p : params) {
      for (T g : p->grad.values()) norm2 += static_cast<double>(g) * static_cast<double>(g);
    }
    if (!std::isfinite(norm2)) {
      for (const Parameter<T>* p : params) {
        if (!p->grad.all_finite()) throw NumericError(where() + ": non-finite gradient in " + p->name);
      }
    }
    const double norm = std::sqrt(norm2);
    if (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) {
      const T factor = static_cast<T>(cfg_.grad_clip / norm);
      for (Parameter<T>* p : params) {
        for (T& g : p->grad.values()) g *= factor;
      }
    }
    adam_step<T>(params, adam_, metrics.lr);

    loss_sum += loss_value * static_cast<double>(n);
    for (std::size_t t = 1; t <= steps; ++t) accumulate_nmse(tape.value(trace.partial[t]), h, nmse[t - 1]);
    seen += n;
  }
  metrics.loss = loss_sum / static_cast<double>(seen);
  for (double s : nmse) metrics.step_nmse_db.push_back(linear_to_db(s / static_cast<double>(seen)));
  ++epoch_;
  return metrics;
}

template <typename T>
std::vector<EpochMetrics> Trainer<T>::fit(std::span<const ChannelSample> data,
                                          const std::function<void(const EpochMetrics&)>& on_epoch,
                                          std::size_t limit) {
  std::vector<EpochMetrics> out;
  while (epoch_ < cfg_.epochs && out.size() < limit) {
    out.push_back(train_epoch(data));
    if (on_epoch) on_epoch(out.back());
  }
  // Leave a schedule that matches the final parameters for evaluation.
  if (!out.empty()) refresh_lambda(data);
  return out;
}

// ---- checkpoints -------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'C', 'S', 'N'};

void write_config(binio::Writer& w, const CodecConfig& c) {
  const SystemConfig& s = c.system;
  for (std::size_t v : {s.n_t, s.n_c, s.n_s, s.codeword, s.time_steps}) w.u32(static_cast<std::uint32_t>(v));
  w.f64(s.input_scale);
  w.u32(static_cast<std::uint32_t>(c.hidden_width));
  for (double v : {c.lif.tau, c.lif.v_th, c.lif.v_reset, c.lif.surrogate_width, c.leaky_slope, c.lambda_floor}) {
    w.f64(v);
  }
}

CodecConfig read_config(binio::Reader& r) {
  CodecConfig c;
  SystemConfig& s = c.system;
  for (std::size_t* v : {&s.n_t, &s.n_c, &s.n_s, &s.codeword, &s.time_steps}) *v = r.u32("system config");
  s.input_scale = r.f64("system config");
  c.hidden_width = r.u32("codec config");
  for (double* v : {&c.lif.tau, &c.lif.v_th, &c.lif.v_reset, &c.lif.surrogate_width, &c.leaky_slope,
                    &c.lambda_floor}) {
    *v = r.f64("codec config");
  }
  return c;
}

void read_header(binio::Reader& r) {
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("not a checkpoint (bad magic)", 0);
  const std::uint64_t at = r.offset();
  const std::uint16_t version = r.u16("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), at);
  }
}

template <typename T>
void write_tensor(binio::Writer& w, const std::string& name, const Tensor<T>& t) {
  w.str(name);
  w.u8(sizeof(T));
  w.u8(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u64(d);
  for (T v : t.values()) {
    if constexpr (sizeof(T) == 4) {
      w.f32(v);
    } else {
      w.f64(v);
    }
  }
}

template <typename T>
void read_tensor(binio::Reader& r, const std::string& name, Tensor<T>& t) {
  const std::uint64_t at = r.offset();
  const std::string stored = r.str("tensor name");
  if (stored != name) throw FormatError("expected tensor " + name + ", found " + stored, at);
  if (r.u8("dtype") != sizeof(T)) throw FormatError("tensor " + name + " has a different dtype", at);
  const std::size_t rank = r.u8("rank");
  Shape shape(rank);
  for (auto& d : shape) d = r.u64("shape");
  if (shape != t.shape()) {
    throw FormatError("tensor " + name + " has shape " + to_string(shape) + ", expected " + to_string(t.shape()),
                      at);
  }
  for (T& v : t.values()) {
    if constexpr (sizeof(T) == 4) {
      v = r.f32("tensor data");
    } else {
      v = r.f64("tensor data");
    }
  }
}

FeedbackStyle read_style(binio::Reader& r) {
  const std::uint64_t at = r.offset();
  switch (r.u8("feedback style")) {
    case 0:
      return FeedbackStyle::progressive;
    case 1:
      return FeedbackStyle::static_input;
    default:
      throw FormatError("unknown feedback style", at);
  }
}

std::string bn_name(const std::string& gamma_name) { return gamma_name.substr(0, gamma_name.rfind('.')); }

}  // namespace

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Trainer<T>& trainer) {
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u16(kCheckpointVersion);
  const SpikingCodec<T>& codec = trainer.codec();
  write_config(w, codec.config());
  w.u8(trainer.config().style == FeedbackStyle::progressive ? 0 : 1);
  w.u64(trainer.epoch());
  w.u32(static_cast<std::uint32_t>(trainer.lambda().values.size()));
  for (double l : trainer.lambda().values) w.f64(l);
  w.u64(trainer.lambda().subset_size);

  const auto params = codec.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const Parameter<T>* p : params) write_tensor(w, p->name, p->value);
  const auto bns = codec.batchnorms();
  w.u32(static_cast<std::uint32_t>(bns.size()));
  for (const BatchNorm<T>* bn : bns) {
    const std::string base = bn_name(bn->gamma.name);
    write_tensor(w, base + ".running_mean", bn->running_mean);
    write_tensor(w, base + ".running_var", bn->running_var);
  }

  const AdamState<T>& adam = trainer.optimizer();
  w.u64(adam.step);
  w.u32(static_cast<std::uint32_t>(adam.m.size()));
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    write_tensor(w, params[i]->name + ".adam_m", adam.m[i]);
    write_tensor(w, params[i]->name + ".adam_v", adam.v[i]);
  }

  std::ostringstream rng;
  rng << trainer.rng();
  w.str(rng.str());
  return std::move(w.buffer());
}

CheckpointInfo peek_checkpoint(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  read_header(r);
  CheckpointInfo info;
  info.codec = read_config(r);
  info.style = read_style(r);
  info.epoch = r.u64("epoch");
  return info;
}

template <typename T>
void decode_checkpoint(std::span<const std::uint8_t> bytes, Trainer<T>& trainer) {
  binio::Reader r(bytes);
  read_header(r);
  SpikingCodec<T>& codec = trainer.codec();
  const CodecConfig stored = read_config(r);
  if (!(stored.system == codec.config().system)) {
    throw ConfigError("checkpoint was written for a different system configuration");
  }
  if (stored.hidden_width != codec.config().hidden_width || !(stored.lif == codec.config().lif) ||
      stored.leaky_slope != codec.config().leaky_slope || stored.lambda_floor != codec.config().lambda_floor) {
    throw ConfigError("checkpoint was written for a different codec configuration");
  }
  if (read_style(r) != trainer.config().style) {
    throw ConfigError("checkpoint was trained with a different feedback style");
  }
  // Stage everything so a malformed blob leaves the trainer untouched.
  const std::size_t epoch = r.u64("epoch");
  LambdaSchedule lambda;
  const std::uint64_t lambda_at = r.offset();
  lambda.values.resize(r.u32("lambda count"));
  if (lambda.values.size() != stored.system.time_steps) {
    throw FormatError("lambda schedule length does not match T", lambda_at);
  }
  for (double& l : lambda.values) l = r.f64("lambda");
  lambda.subset_size = r.u64("lambda subset");

  auto params = codec.parameters();
  std::vector<Tensor<T>> values;
  const std::uint64_t params_at = r.offset();
  if (r.u32("parameter count") != params.size()) throw FormatError("parameter count mismatch", params_at);
  for (const Parameter<T>* p : params) {
    values.emplace_back(p->value.shape());
    read_tensor(r, p->name, values.back());
  }
  auto bns = codec.batchnorms();
  std::vector<Tensor<T>> stats;
  const std::uint64_t bn_at = r.offset();
  if (r.u32("batch-norm count") != bns.size()) throw FormatError("batch-norm count mismatch", bn_at);
  for (const BatchNorm<T>* bn : bns) {
    const std::string base = bn_name(bn->gamma.name);
    stats.emplace_back(bn->running_mean.shape());
    read_tensor(r, base + ".running_mean", stats.back());
    stats.emplace_back(bn->running_var.shape());
    read_tensor(r, base + ".running_var", stats.back());
  }

  AdamState<T> adam;
  adam.step = r.u64("adam step");
  const std::uint64_t adam_at = r.offset();
  const std::size_t moments = r.u32("adam count");
  if (moments != 0 && moments != params.size()) throw FormatError("optimizer state size mismatch", adam_at);
  for (std::size_t i = 0; i < moments; ++i) {
    adam.m.emplace_back(params[i]->value.shape());
    read_tensor(r, params[i]->name + ".adam_m", adam.m.back());
    adam.v.emplace_back(params[i]->value.shape());
    read_tensor(r, params[i]->name + ".adam_v", adam.v.back());
  }

  const std::uint64_t rng_at = r.offset();
  std::istringstream rng_text(r.str("rng state"));
  std::mt19937_64 rng;
  if (!(rng_text >> rng)) throw FormatError("corrupt RNG state", rng_at);
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(values[i]);
  for (std::size_t i = 0; i < bns.size(); ++i) {
    bns[i]->running_mean = std::move(stats[2 * i]);
    bns[i]->running_var = std::move(stats[2 * i + 1]);
  }
  codec.zero_grad();
  trainer.optimizer() = std::move(adam);
  trainer.rng() = rng;
  trainer.set_epoch(epoch);
  trainer.set_lambda(std::move(lambda));
}

template <typename T>
void save_checkpoint(const Trainer<T>& trainer, const std::filesystem::path& path) {
  binio::write_file(path, encode_checkpoint(trainer));
}

template <typename T>
void load_checkpoint(const std::filesystem::path& path, Trainer<T>& trainer) {
  const auto bytes = binio::read_file(path);
  decode_checkpoint<T>(bytes, trainer);
}

#define SPIKECSI_INSTANTIATE(T)                                                                                    \
  template void adam_step(std::span<Parameter<T>* const>, AdamState<T>&, double, const AdamConfig&);               \
  template double pr_loss(std::span<const Tensor<T>>, const Tensor<T>&, double);                                   \
  template typename Tape<T>::Var record_loss(Tape<T>&, const TraceVars<T>&, typename Tape<T>::Var, double);        \
  template EvalResult evaluate(SpikingCodec<T>&, std::span<const ChannelSample>, const LambdaSchedule&,            \
                               FeedbackStyle, std::size_t);                                                        \
  template class Trainer<T>;                                                                                       \
  template std::vector<std::uint8_t> encode_checkpoint(const Trainer<T>&);                                         \
  template void decode_checkpoint(std::span<const std::uint8_t>, Trainer<T>&);                                     \
  template void save_checkpoint(const Trainer<T>&, const std::filesystem::path&);                                  \
  template void load_checkpoint(const std::filesystem::path&, Trainer<T>&);

SPIKECSI_INSTANTIATE(float)
SPIKECSI_INSTANTIATE(double)
#undef SPIKECSI_INSTANTIATE

}  // namespace spikecsi
