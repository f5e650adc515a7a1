// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The spikecsi Authors

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "spikecsi/energy.hpp"

namespace spikecsi {
namespace {

CodecConfig base_config(std::size_t cr = 8, std::size_t steps = 6) {
  CodecConfig cfg;
  cfg.system = SystemConfig::from_compression_ratio(32, 1024, 32, cr, steps);
  return cfg;
}

double layer_joules(const OpCounters& c, std::string_view prefix) {
  double j = 0.0;
  for (const OpEntry& e : c.entries) j += e.layer.starts_with(prefix) ? e.joules : 0.0;
  return j;
}

TEST(Counts, AnalogLayers) {
  EXPECT_EQ(count_mac_fc(2048, 256), 524288u);
  EXPECT_EQ(count_mac_conv3x3(2, 4, 32, 32), 73728u);
  EXPECT_EQ(count_mac_fc(0, 256), 0u);
  EXPECT_EQ(count_mac_conv3x3(2, 4, 0, 32), 0u);
}

TEST(Counts, SpikeDrivenLayers) {
  EXPECT_EQ(count_ac_spike_fc(0.0, 256, 4096), 0.0);
  EXPECT_EQ(count_ac_spike_fc(1.0, 256, 4096), 1048576.0);
  EXPECT_NEAR(count_ac_spike_fc(0.0421, 4096, 2048), 353160.4, 0.05);
  EXPECT_THROW(count_ac_spike_fc(-0.01, 4, 4), RangeError);
  EXPECT_THROW(count_ac_spike_fc(1.01, 4, 4), RangeError);
  EXPECT_THROW(count_ac_spike_fc(std::numeric_limits<double>::quiet_NaN(), 4, 4), RangeError);
}

// With k of M_in inputs active, an FC adds its weight column once per active
// input: k * M_out accumulates. The rate form must agree at rho = k / M_in.
TEST(Counts, RateFormMatchesDirectCount) {
  std::mt19937_64 rng(5);
  const std::size_t in = 96, out = 40;
  for (int trial = 0; trial < 20; ++trial) {
    std::bernoulli_distribution fire(0.05 * trial);
    std::size_t direct = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < in; ++i) {
      if (fire(rng)) {
        ++k;
        direct += out;
      }
    }
    EXPECT_DOUBLE_EQ(count_ac_spike_fc(static_cast<double>(k) / in, in, out), static_cast<double>(direct));
  }
}

TEST(TotalEnergy, Examples) {
  const EnergyModel m;
  OpCounters c;
  EXPECT_EQ(total_energy(c, m), 0.0);
  c.entries.push_back({"enc", 1, OpKind::mac, 671744.0, 1.0, 0.0});
  EXPECT_NEAR(total_energy(c, m), 2.150e-6, 1e-9);
  c.entries.clear();
  c.entries.push_back({"a", 1, OpKind::mac, 1000.0, 1.0, 0.0});
  c.entries.push_back({"b", 1, OpKind::ac, 2000.0, 0.5, 0.0});
  EXPECT_NEAR(total_energy(c, m), 3.4e-9, 1e-21);
  EXPECT_EQ(c.n_mac(), 1000.0);
  EXPECT_EQ(c.n_ac(), 2000.0);
}

TEST(EnergyModel, Validation) {
  EXPECT_NO_THROW(EnergyModel{}.validate());
  EXPECT_THROW((EnergyModel{0.0, 1e-13}.validate()), ConfigError);
  EXPECT_THROW((EnergyModel{3.2e-12, -1.0}.validate()), ConfigError);
}

FeedbackTrace<float> frames(std::size_t steps, std::size_t batch, std::size_t m, std::size_t d, float fill) {
  FeedbackTrace<float> tr;
  for (std::size_t t = 0; t < steps; ++t) {
    tr.spikes.emplace_back(Shape{batch, m}, fill);
    tr.decoder_spikes.emplace_back(Shape{batch, d}, fill);
  }
  return tr;
}

TEST(Firing, Examples) {
  const std::vector<FeedbackTrace<float>> silent{frames(6, 2, 8, 16, 0.0f)};
  const FiringStats s0 = measure_firing<float>(silent);
  EXPECT_EQ(s0.codeword_rho, 0.0);
  EXPECT_EQ(s0.decoder_rho, 0.0);
  EXPECT_EQ(s0.samples, 2u);

  const std::vector<FeedbackTrace<float>> busy{frames(6, 2, 8, 16, 1.0f)};
  const FiringStats s1 = measure_firing<float>(busy);
  EXPECT_EQ(s1.codeword_rho, 1.0);
  EXPECT_EQ(s1.decoder_rho, 1.0);

  std::vector<FeedbackTrace<float>> one{frames(6, 1, 256, 4096, 0.0f)};
  one[0].decoder_spikes[2][17] = 1.0f;
  const FiringStats s2 = measure_firing<float>(one);
  EXPECT_DOUBLE_EQ(s2.decoder_rho, 1.0 / 24576.0);
  EXPECT_DOUBLE_EQ(s2.decoder_per_step[2], 1.0 / 4096.0);
  EXPECT_EQ(s2.decoder_per_step[1], 0.0);

  EXPECT_THROW(measure_firing<float>(std::span<const FeedbackTrace<float>>()), ConfigError);
}

TEST(Firing, PoolsAcrossBatches) {
  // 3 of 2*4 in the first batch, 1 of 1*4 in the second: 4 / 12 over one step.
  std::vector<FeedbackTrace<float>> traces{frames(1, 2, 4, 4, 0.0f), frames(1, 1, 4, 4, 0.0f)};
  traces[0].spikes[0][0] = traces[0].spikes[0][3] = traces[0].spikes[0][5] = 1.0f;
  traces[1].spikes[0][2] = 1.0f;
  const FiringStats s = measure_firing<float>(traces);
  EXPECT_DOUBLE_EQ(s.codeword_rho, 4.0 / 12.0);
  EXPECT_EQ(s.samples, 3u);
  traces[1] = frames(2, 1, 4, 4, 0.0f);
  EXPECT_THROW(measure_firing<float>(traces), DimensionError);
}

TEST(Audit, EncoderCostPerStep) {
  const EnergyReport r = assemble_audit(base_config(), constant_firing(6, 0.0, 0.0), EnergyModel{});
  double enc_macs = 0.0;
  for (const OpEntry& e : r.link.entries) {
    if (e.layer.starts_with("enc") && e.step == 1) enc_macs += e.count;
  }
  EXPECT_EQ(enc_macs, 671744.0);
  EXPECT_EQ(r.link.n_mac(), 6.0 * 671744.0);
  EXPECT_EQ(r.link.n_ac(), 0.0);
}

TEST(Audit, BreakdownSumsToTotal) {
  const EnergyModel model;
  const EnergyReport r = assemble_audit(base_config(), constant_firing(6, 0.31, 0.0421), model);
  double sum = 0.0;
  for (const OpEntry& e : r.link.entries) sum += e.joules;
  EXPECT_EQ(sum, r.total_joules());
  EXPECT_NEAR(total_energy(r.link, model), r.total_joules(), 1e-15 * r.total_joules());

  // The CSV rows (minus the UT-extra ones) add up to the same figure.
  std::istringstream csv(format_csv(r));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "layer,step,op,count,rho,joules");
  double csv_sum = 0.0;
  std::size_t rows = 0;
  while (std::getline(csv, line)) {
    if (line.starts_with("ut_extra.")) continue;
    csv_sum += std::stod(line.substr(line.rfind(',') + 1));
    ++rows;
  }
  EXPECT_EQ(rows, r.link.entries.size());
  EXPECT_NEAR(csv_sum, r.total_joules(), 1e-15 * r.total_joules());
}

TEST(Audit, LinearInRatesAndSteps) {
  const EnergyModel model;
  const CodecConfig cfg = base_config();
  auto total = [&](double rc, double rd) { return assemble_audit(cfg, constant_firing(6, rc, rd), model).total_joules(); };
  const double base = total(0.0, 0.0);
  const double a = total(0.2, 0.0421) - base;
  const double b = total(0.4, 0.0842) - base;
  EXPECT_NEAR(b, 2.0 * a, 1e-12 * b);
  EXPECT_NEAR(total(0.3, 0.1) - total(0.3, 0.0), total(0.0, 0.1) - base, 1e-12 * base);

  const EnergyReport r6 = assemble_audit(base_config(8, 6), constant_firing(6, 0.3, 0.05), model);
  const EnergyReport r12 = assemble_audit(base_config(8, 12), constant_firing(12, 0.3, 0.05), model);
  EXPECT_EQ(layer_joules(r12.link, "enc.fc"), 2.0 * layer_joules(r6.link, "enc.fc"));
  EXPECT_NEAR(r12.total_joules(), 2.0 * r6.total_joules(), 1e-12 * r12.total_joules());
}

TEST(Audit, SilentDecoderLeavesEncoderAndCodewordTerms) {
  const EnergyModel model;
  const CodecConfig cfg = base_config();
  const EnergyReport r = assemble_audit(cfg, constant_firing(6, 0.25, 0.0), model);
  EXPECT_EQ(layer_joules(r.link, "dec.output"), 0.0);
  const double codeword_acs = 6.0 * 0.25 * (256.0 * 4096.0 + 256.0 * 2048.0);
  EXPECT_NEAR(r.total_joules(), model.e_mac * 6.0 * 671744.0 + model.e_ac * codeword_acs, 1e-12 * r.total_joules());
}

TEST(Audit, UtExtraCoversAllButLastStep) {
  const EnergyReport r = assemble_audit(base_config(), constant_firing(6, 0.3, 0.05), EnergyModel{});
  const double per_step_decoder = layer_joules(r.link, "dec") / 6.0;
  EXPECT_NEAR(r.ut_extra_joules(), 5.0 * per_step_decoder, 1e-12 * r.ut_extra_joules());
  for (const OpEntry& e : r.ut_extra.entries) EXPECT_LT(e.step, 6u);
}

TEST(Audit, RejectsMismatchedRates) {
  EXPECT_THROW(assemble_audit(base_config(), constant_firing(5, 0.1, 0.1), EnergyModel{}), DimensionError);
  EXPECT_THROW(assemble_audit(base_config(), constant_firing(6, 1.5, 0.1), EnergyModel{}), RangeError);
}

CodecConfig small_config() {
  CodecConfig cfg;
  cfg.system = SystemConfig::from_compression_ratio(8, 8, 8, 8, 3);
  cfg.hidden_width = 48;
  return cfg;
}

TEST(AuditModel, MeasuresRatesWithoutSideEffects) {
  SpikingCodec<float> codec(small_config());
  codec.initialize(4);
  for (BatchNorm<float>* bn : codec.batchnorms()) {
    bn->running_mean.fill(0.1f);
    bn->running_var.fill(2.0f);
  }
  std::vector<Tensor<float>> before;
  for (const Parameter<float>* p : codec.parameters()) before.push_back(p->value);
  const Dataset ds = synth_generate(codec.config().system, {2, 8}, 25, 3);
  const LambdaSchedule lam = estimate_lambda(codec, std::span<const ChannelSample>(ds.samples));

  const EnergyReport r = audit_model(codec, std::span<const ChannelSample>(ds.samples), lam, EnergyModel{}, 10);
  EXPECT_EQ(r.firing.samples, 25u);
  std::size_t i = 0;
  for (const Parameter<float>* p : codec.parameters()) EXPECT_EQ(p->value, before[i++]) << p->name;
  for (const BatchNorm<float>* bn : codec.batchnorms()) {
    EXPECT_EQ(bn->running_mean, Tensor<float>({bn->channels()}, 0.1f));
    EXPECT_EQ(bn->running_var, Tensor<float>({bn->channels()}, 2.0f));
  }

  // Same rates as one direct pass over the whole set.
  const FeedbackTrace<float> tr = pr_feedback(codec, to_batch<float>(ds.samples), lam, ForwardOptions{});
  const std::vector<FeedbackTrace<float>> one{tr};
  const FiringStats direct = measure_firing<float>(one);
  EXPECT_NEAR(r.firing.codeword_rho, direct.codeword_rho, 1e-12);
  EXPECT_NEAR(r.firing.decoder_rho, direct.decoder_rho, 1e-12);

  // A second audit is identical.
  const EnergyReport again = audit_model(codec, std::span<const ChannelSample>(ds.samples), lam, EnergyModel{}, 10);
  EXPECT_EQ(format_csv(again), format_csv(r));

  EXPECT_THROW(audit_model(codec, std::span<const ChannelSample>(), lam), ConfigError);
}

TEST(AuditModel, SilencedDecoderHasNoOutputEnergy) {
  SpikingCodec<float> codec(small_config());
  codec.initialize(4);
  codec.decoder().hidden.weight.value.fill(0.0f);
  codec.decoder().hidden.bias.value.fill(0.0f);
  const Dataset ds = synth_generate(codec.config().system, {2, 8}, 12, 3);
  const EnergyReport r =
      audit_model(codec, std::span<const ChannelSample>(ds.samples), LambdaSchedule::unit(3), EnergyModel{});
  EXPECT_EQ(r.firing.decoder_rho, 0.0);
  EXPECT_EQ(layer_joules(r.link, "dec.output"), 0.0);
  EXPECT_NE(format_report(r).find("measured on 12 samples"), std::string::npos);
}

}  // namespace
}  // namespace spikecsi
