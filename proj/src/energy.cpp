// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include "spikecsi/energy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>

namespace spikecsi {

void EnergyModel::validate() const {
  if (!(e_mac > 0.0) || !(e_ac > 0.0)) throw ConfigError("energy per MAC and per AC must be positive");
}

std::uint64_t count_mac_fc(std::size_t in, std::size_t out) { return std::uint64_t{in} * out; }

std::uint64_t count_mac_conv3x3(std::size_t c_in, std::size_t c_out, std::size_t h, std::size_t w) {
  return 9ull * c_in * c_out * h * w;
}

double count_ac_spike_fc(double rho, std::size_t in, std::size_t out) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw RangeError(fmt::format("firing rate {} outside [0, 1]", rho));
  return rho * static_cast<double>(in) * static_cast<double>(out);
}

double OpCounters::n_mac() const {
  double n = 0.0;
  for (const OpEntry& e : entries) n += e.kind == OpKind::mac ? e.count : 0.0;
  return n;
}

double OpCounters::n_ac() const {
  double n = 0.0;
  for (const OpEntry& e : entries) n += e.kind == OpKind::ac ? e.count : 0.0;
  return n;
}

double OpCounters::joules() const {
  double j = 0.0;
  for (const OpEntry& e : entries) j += e.joules;
  return j;
}

double total_energy(const OpCounters& counters, const EnergyModel& model) {
  return model.e_mac * counters.n_mac() + model.e_ac * counters.n_ac();
}

template <typename T>
FiringStats measure_firing(std::span<const FeedbackTrace<T>> traces) {
  if (traces.empty()) throw ConfigError("firing rates need at least one trace");
  const std::size_t steps = traces.front().spikes.size();
  std::vector<double> code(steps, 0.0), dec(steps, 0.0);
  double code_units = 0.0, dec_units = 0.0;  // neurons * samples, per step
  FiringStats st;
  for (const FeedbackTrace<T>& tr : traces) {
    if (tr.spikes.size() != steps || tr.decoder_spikes.size() != steps) {
      throw DimensionError("traces disagree on the number of time steps");
    }
    for (std::size_t t = 0; t < steps; ++t) {
      for (T v : tr.spikes[t].values()) code[t] += static_cast<double>(v);
      for (T v : tr.decoder_spikes[t].values()) dec[t] += static_cast<double>(v);
    }
    code_units += static_cast<double>(tr.spikes.front().size());
    dec_units += static_cast<double>(tr.decoder_spikes.front().size());
    st.samples += tr.spikes.front().dim(0);
  }
  double code_total = 0.0, dec_total = 0.0;
  for (std::size_t t = 0; t < steps; ++t) {
    st.codeword_per_step.push_back(code[t] / code_units);
    st.decoder_per_step.push_back(dec[t] / dec_units);
    code_total += code[t];
    dec_total += dec[t];
  }
  st.codeword_rho = code_total / (code_units * static_cast<double>(steps));
  st.decoder_rho = dec_total / (dec_units * static_cast<double>(steps));
  return st;
}

FiringStats constant_firing(std::size_t steps, double codeword_rho, double decoder_rho) {
  FiringStats st;
  st.codeword_rho = codeword_rho;
  st.decoder_rho = decoder_rho;
  st.codeword_per_step.assign(steps, codeword_rho);
  st.decoder_per_step.assign(steps, decoder_rho);
  return st;
}

namespace {

void add_entry(OpCounters& c, const EnergyModel& m, std::string layer, std::size_t step, OpKind kind, double count,
               double rho) {
  const double joules = count * (kind == OpKind::mac ? m.e_mac : m.e_ac);
  c.entries.push_back(OpEntry{std::move(layer), step, kind, count, rho, joules});
}

void add_decoder(OpCounters& c, const EnergyModel& m, const CodecConfig& cfg, std::size_t t, double rho_code,
                 double rho_dec) {
  const std::size_t mw = cfg.system.codeword, d = cfg.hidden_width, f = cfg.system.flat_size();
  add_entry(c, m, "dec.hidden", t, OpKind::ac, count_ac_spike_fc(rho_code, mw, d), rho_code);
  add_entry(c, m, "dec.output", t, OpKind::ac, count_ac_spike_fc(rho_dec, d, f), rho_dec);
  add_entry(c, m, "dec.skip", t, OpKind::ac, count_ac_spike_fc(rho_code, mw, f), rho_code);
}

}  // namespace

EnergyReport assemble_audit(const CodecConfig& cfg, const FiringStats& firing, const EnergyModel& model) {
  cfg.validate();
  model.validate();
  const SystemConfig& s = cfg.system;
  if (firing.codeword_per_step.size() != s.time_steps || firing.decoder_per_step.size() != s.time_steps) {
    throw DimensionError("firing statistics must cover every time step");
  }
  EnergyReport r{cfg, model, firing, {}, {}, "analytic rates"};
  for (std::size_t t = 1; t <= s.time_steps; ++t) {
    const std::string stack = "enc.step" + std::to_string(t);
    add_entry(r.link, model, stack + ".conv1", t, OpKind::mac,
              static_cast<double>(count_mac_conv3x3(2, 4, s.n_s, s.n_t)), 1.0);
    add_entry(r.link, model, stack + ".conv2", t, OpKind::mac,
              static_cast<double>(count_mac_conv3x3(4, 2, s.n_s, s.n_t)), 1.0);
    add_entry(r.link, model, "enc.fc", t, OpKind::mac, static_cast<double>(count_mac_fc(s.flat_size(), s.codeword)),
              1.0);
    add_decoder(r.link, model, cfg, t, firing.codeword_per_step[t - 1], firing.decoder_per_step[t - 1]);
    // The UT needs its own reconstruction only to form the next residual.
    if (t < s.time_steps) {
      add_decoder(r.ut_extra, model, cfg, t, firing.codeword_per_step[t - 1], firing.decoder_per_step[t - 1]);
    }
  }
  return r;
}

template <typename T>
EnergyReport audit_model(SpikingCodec<T>& codec, std::span<const ChannelSample> samples,
                         const LambdaSchedule& lambda, const EnergyModel& model, std::size_t batch) {
  if (samples.empty()) throw ConfigError("energy audit needs at least one sample");
  if (batch == 0) throw ConfigError("audit batch must be positive");
  std::vector<FeedbackTrace<T>> traces;
  for (std::size_t i = 0; i < samples.size(); i += batch) {
    const Tensor<T> h = to_batch<T>(samples.subspan(i, std::min(batch, samples.size() - i)));
    FeedbackTrace<T> tr = pr_feedback(codec, h, lambda, ForwardOptions{});
    // Only the spike frames are needed; drop the dense planes early.
    tr.outputs.clear();
    tr.partial.clear();
    tr.inputs.clear();
    traces.push_back(std::move(tr));
  }
  EnergyReport r = assemble_audit(codec.config(), measure_firing<T>(traces), model);
  r.source = fmt::format("measured on {} samples", samples.size());
  return r;
}

std::string format_report(const EnergyReport& r) {
  const SystemConfig& s = r.config.system;
  std::string out;
  auto line = [&out](const std::string& l) { out += l + '\n'; };
  line("energy audit");
  line(fmt::format("  geometry     N_s={} N_t={} M={} CR={:g} T={} D={}", s.n_s, s.n_t, s.codeword,
                   s.compression_ratio(), s.time_steps, r.config.hidden_width));
  line(fmt::format("  model        E_mac={:g} J  E_ac={:g} J", r.model.e_mac, r.model.e_ac));
  line(fmt::format("  rates        {}", r.source));
  line(fmt::format("    codeword   rho={:.6f}", r.firing.codeword_rho));
  line(fmt::format("    decoder    rho={:.6f}", r.firing.decoder_rho));
  line("  per-layer totals (per sample, all steps)");

  std::map<std::string, std::pair<double, double>> by_layer;  // count, joules
  std::vector<std::string> order;
  for (const OpEntry& e : r.link.entries) {
    if (!by_layer.contains(e.layer)) order.push_back(e.layer);
    auto& slot = by_layer[e.layer];
    slot.first += e.count;
    slot.second += e.joules;
  }
  for (const std::string& name : order) {
    const auto& [count, joules] = by_layer[name];
    line(fmt::format("    {:<18} {:>16.1f} ops  {:>10.4f} uJ", name, count, joules * 1e6));
  }
  line(fmt::format("  N_mac        {:.1f}", r.link.n_mac()));
  line(fmt::format("  N_ac         {:.1f}", r.link.n_ac()));
  line(fmt::format("  total        {:.4f} uJ (encoder + decoder, one pass per step)", r.total_joules() * 1e6));
  line(fmt::format("  UT extra     {:.4f} uJ (virtual decoder, steps 1..T-1, not in total)",
                   r.ut_extra_joules() * 1e6));
  return out;
}

std::string format_csv(const EnergyReport& r) {
  std::string out = "layer,step,op,count,rho,joules\n";
  auto rows = [&out](const OpCounters& c, const char* prefix) {
    for (const OpEntry& e : c.entries) {
      out += fmt::format("{}{},{},{},{:.17g},{:.17g},{:.17g}\n", prefix, e.layer, e.step,
                         e.kind == OpKind::mac ? "mac" : "ac", e.count, e.rho, e.joules);
    }
  };
  rows(r.link, "");
  rows(r.ut_extra, "ut_extra.");
  return out;
}

template FiringStats measure_firing(std::span<const FeedbackTrace<float>>);
template FiringStats measure_firing(std::span<const FeedbackTrace<double>>);
template EnergyReport audit_model(SpikingCodec<float>&, std::span<const ChannelSample>, const LambdaSchedule&,
                                  const EnergyModel&, std::size_t);
template EnergyReport audit_model(SpikingCodec<double>&, std::span<const ChannelSample>, const LambdaSchedule&,
                                  const EnergyModel&, std::size_t);

}  // namespace spikecsi
