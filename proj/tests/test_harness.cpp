#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tarq/harness.hpp"
#include "tarq/report.hpp"
#include "tarq/rng.hpp"

#ifndef TARQ_GOLDEN_DIR
#error "TARQ_GOLDEN_DIR must point at tests/golden"
#endif

namespace tarq {
namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.layer_dims = {6, 6, 4};
  s.positions = 64;
  s.seed = 9;
  return s;
}

ExperimentParams tiny_params(std::size_t trials) {
  ExperimentParams p;
  p.tarq.sweep.quant.group_size = 3;
  p.trials = trials;
  return p;
}

std::size_t count_runs(const std::vector<RunReport>& r) { return r.size(); }

TEST(SyntheticSpec, Validation) {
  SyntheticSpec s = tiny_spec();
  EXPECT_NO_THROW(s.validate());
  s.tail_share = 1.5;
  EXPECT_THROW(s.validate(), Error);
  s = tiny_spec();
  s.layer_dims = {4};
  EXPECT_THROW(s.validate(), Error);
  s = tiny_spec();
  s.positions = 0;
  EXPECT_THROW(s.validate(), Error);
}

TEST(GenerateBatch, TailCount) {
  SyntheticSpec s = tiny_spec();
  s.tail_share = 0.5;
  s.positions = 100;
  const SyntheticBatch b = generate_batch(s);
  EXPECT_EQ(std::count(b.tags.begin(), b.tags.end(), Tag::kTail), 50);
  EXPECT_EQ(tags_at(b.zipf, 3.0), b.tags);
}

TEST(GenerateBatch, Deterministic) {
  const SyntheticBatch a = generate_batch(tiny_spec());
  const SyntheticBatch b = generate_batch(tiny_spec());
  EXPECT_EQ(a.layers, b.layers);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.tags, b.tags);
  EXPECT_EQ(a.zipf, b.zipf);
  SyntheticSpec other = tiny_spec();
  other.seed = 10;
  EXPECT_NE(generate_batch(other).inputs, a.inputs);
}

TEST(GenerateBatch, TailSampleCovariance) {
  SyntheticSpec s;
  s.positions = 2000;
  s.tail_share = 0.07;
  s.seed = 3;
  const SyntheticBatch b = generate_batch(s);
  const std::size_t n = s.layer_dims[0];
  Matrix cov(n, n);
  std::size_t tail = 0;
  for (std::size_t t = 0; t < b.tags.size(); ++t) {
    if (b.tags[t] != Tag::kTail) continue;
    ++tail;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) cov(i, j) += b.inputs(t, i) * b.inputs(t, j);
  }
  EXPECT_EQ(tail, 140u);
  cov = (1.0 / static_cast<double>(tail)) * cov;
  const Matrix want = tail_covariance(s);
  EXPECT_LE((cov - want).frobenius_norm(), 0.15 * want.frobenius_norm());
}

TEST(Covariances, OrthogonalRotationLeavesTraceAndSpectrum) {
  const SyntheticSpec s;
  const Matrix c = common_covariance(s);
  const Matrix t = tail_covariance(s);
  double expect_c = 0.0, expect_t = 0.0;
  for (std::size_t k = 0; k < s.layer_dims[0]; ++k) {
    expect_c += std::pow(s.common_decay, static_cast<double>(k));
    expect_t += std::pow(s.tail_decay, static_cast<double>(k));
  }
  EXPECT_NEAR(c.trace(), expect_c, 1e-10);
  EXPECT_NEAR(t.trace(), s.tail_scale * expect_t, 1e-10);
}

TEST(RunExperiment, NoDriftSingleLayerMatchesSweepLoss) {
  SyntheticSpec s = tiny_spec();
  s.layer_dims = {6, 4};
  const ExperimentParams p = tiny_params(1);
  const RunReport r = run_method(s, Variant::kGptq, p);

  SyntheticSpec trial = s;
  trial.seed = Rng::derive(s.seed, 0);
  const SyntheticBatch b = generate_batch(trial);
  const TaggedActivations acts{b.inputs, b.inputs, tags_at(b.zipf, 3.0)};
  const GroupedMoments m = accumulate_moments(acts);
  const QuantizedTensor q = gptq_sweep(b.layers[0], m.h_total(), p.tarq.sweep);
  EXPECT_DOUBLE_EQ(r.per_layer[0].weighted_loss, sweep_loss_report(b.layers[0], q, m.h_total()));
}

TEST(RunExperiment, DeterministicAcrossRuns) {
  const auto a = run_experiment(tiny_spec(), {Variant::kTarq, Variant::kNoiseBal}, tiny_params(6));
  const auto b = run_experiment(tiny_spec(), {Variant::kTarq, Variant::kNoiseBal}, tiny_params(6));
  EXPECT_EQ(format_report(a), format_report(b));
  EXPECT_EQ(a[0].trial_tail, b[0].trial_tail);
}

TEST(RunExperiment, MethodsKeepInputOrder) {
  const auto r = run_experiment(tiny_spec(), {Variant::kTarq, Variant::kGptq}, tiny_params(2));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].method, "tarq");
  EXPECT_EQ(r[1].method, "gptq");
  const std::string text = format_report(r);
  EXPECT_LT(text.find("method = tarq"), text.find("method = gptq"));
}

TEST(RunGrid, CellCountsAndLabels) {
  const SyntheticSpec s = tiny_spec();
  const ExperimentParams p = tiny_params(2);
  const auto c = run_grid(GridKind::kCostRatio, s, p);
  ASSERT_EQ(count_runs(c), 5u);
  EXPECT_EQ(c.front().cell, "c=0.25");
  EXPECT_EQ(c.back().cell, "c=4");
  const auto k = run_grid(GridKind::kZipf, s, p);
  ASSERT_EQ(count_runs(k), 9u);
  EXPECT_EQ(k[1].cell, "k_c=2,k_e=3");
  EXPECT_EQ(k[3].cell, "k_c=3,k_e=2");
  const auto src = run_grid(GridKind::kSource, s, p);
  ASSERT_EQ(count_runs(src), 3u);
  EXPECT_EQ(src[0].cell, "rB");
  EXPECT_EQ(src[1].cell, "nB");
  EXPECT_EQ(src[2].cell, "cB");
  EXPECT_EQ(count_runs(run_grid(GridKind::kVariants, s, p)), 4u);
  for (const char* name : {"variants", "c", "k", "source", "spqr"}) {
    ASSERT_TRUE(parse_grid(name).has_value());
    EXPECT_EQ(grid_name(*parse_grid(name)), name);
  }
}

TEST(RunGrid, CostRatioEchoedInConfig) {
  const auto c = run_grid(GridKind::kCostRatio, tiny_spec(), tiny_params(1));
  const auto& cfg = c[0].config;
  const auto it = std::find_if(cfg.begin(), cfg.end(),
                               [](const auto& kv) { return kv.first == "cost_ratio_c"; });
  ASSERT_NE(it, cfg.end());
  EXPECT_EQ(it->second, "0.25");
}

TEST(PairedWinFraction, CountsTies) {
  RunReport a, b;
  a.trial_tail = {1.0, 2.0, 3.0, 4.0};
  b.trial_tail = {1.0, 1.0, 5.0, 5.0};
  EXPECT_EQ(paired_win_fraction(a, b), 0.75);
}

TEST(Report, EmptyIsAnError) {
  try {
    format_report({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyReport);
  }
  RunReport r;
  r.method = "gptq";
  try {
    format_report({r});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyReport);
  }
}

TEST(Report, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5e-8}) {
    EXPECT_EQ(std::stod(format_number(v)), v);
  }
  EXPECT_EQ(format_number(0.25), "0.25");
}

TEST(Report, GoldenSingleLayerSingleMethod) {
  SyntheticSpec s = tiny_spec();
  s.layer_dims = {6, 4};
  const std::string got = format_report({run_method(s, Variant::kTarq, tiny_params(3))});
  std::ifstream in(std::string(TARQ_GOLDEN_DIR) + "/single_layer_tarq.txt", std::ios::binary);
  ASSERT_TRUE(in.good()) << "golden file missing";
  std::ostringstream want;
  want << in.rdbuf();
  EXPECT_EQ(got, want.str());
}

TEST(Report, EmitWritesFile) {
  SyntheticSpec s = tiny_spec();
  s.layer_dims = {6, 4};
  const auto reports = std::vector<RunReport>{run_method(s, Variant::kGptq, tiny_params(1))};
  const std::string path = ::testing::TempDir() + "harness_report.txt";
  emit_report(reports, path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream text;
  text << in.rdbuf();
  EXPECT_EQ(text.str(), format_report(reports));
  EXPECT_THROW(emit_report(reports, "/nonexistent-dir/x/report.txt"), Error);
}

}  // namespace
}  // namespace tarq
