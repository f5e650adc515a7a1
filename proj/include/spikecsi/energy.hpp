// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikecsi/codec.hpp"

namespace spikecsi {

struct EnergyModel {
  double e_mac = 3.2e-12;  // joules per multiply-accumulate
  double e_ac = 1e-13;     // joules per accumulate

  void validate() const;
};

// Batch norm is folded into the preceding layer and biases into the layer's
// own operations, so neither adds counts.
std::uint64_t count_mac_fc(std::size_t in, std::size_t out);
std::uint64_t count_mac_conv3x3(std::size_t c_in, std::size_t c_out, std::size_t h, std::size_t w);

/// Expected accumulates of a spike-fed FC: rho * in * out. RangeError unless
/// 0 <= rho <= 1.
double count_ac_spike_fc(double rho, std::size_t in, std::size_t out);

enum class OpKind { mac, ac };

struct OpEntry {
  std::string layer;
  std::size_t step = 0;  // 1-based time step
  OpKind kind = OpKind::mac;
  double count = 0.0;  // per sample
  double rho = 1.0;    // input firing rate (1 for analog layers)
  double joules = 0.0;
};

struct OpCounters {
  std::vector<OpEntry> entries;

  double n_mac() const;
  double n_ac() const;
  double joules() const;  // sum of the entries
};

/// E = E_mac * N_mac + E_ac * N_ac.
double total_energy(const OpCounters& counters, const EnergyModel& model);

struct FiringStats {
  double codeword_rho = 0.0;  // encoder output s[t]
  double decoder_rho = 0.0;   // decoder LIF layer
  std::vector<double> codeword_per_step;
  std::vector<double> decoder_per_step;
  std::size_t samples = 0;
};

/// Spikes / (neurons * steps * samples) for the codeword and the decoder LIF
/// layer. Empty input is an error.
template <typename T>
FiringStats measure_firing(std::span<const FeedbackTrace<T>> traces);

/// Uniform rates over all T steps.
FiringStats constant_firing(std::size_t steps, double codeword_rho, double decoder_rho);

struct EnergyReport {
  CodecConfig config;
  EnergyModel model;
  FiringStats firing;
  OpCounters link;      // one encoder + one decoder pass per step (UT -> BS)
  OpCounters ut_extra;  // the UT's virtual decoder for steps 1..T-1
  std::string source;   // "measured on N samples" or "analytic rates"

  double total_joules() const { return link.joules(); }
  double ut_extra_joules() const { return ut_extra.joules(); }
};

/// Counts and energies for given per-step rates; entries per layer and step.
EnergyReport assemble_audit(const CodecConfig& cfg, const FiringStats& firing, const EnergyModel& model);

/// Runs eval-mode inference over `samples`, measures rates, and assembles the
/// audit. Leaves parameters and running statistics untouched.
template <typename T>
EnergyReport audit_model(SpikingCodec<T>& codec, std::span<const ChannelSample> samples,
                         const LambdaSchedule& lambda, const EnergyModel& model = {}, std::size_t batch = 200);

std::string format_report(const EnergyReport& report);
/// layer,step,op,count,rho,joules with one row per entry; UT-extra rows are
/// prefixed "ut_extra.".
std::string format_csv(const EnergyReport& report);

}  // namespace spikecsi
