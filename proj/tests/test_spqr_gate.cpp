#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "tarq/spqr_gate.hpp"
#include "test_util.hpp"

namespace tarq {
namespace {

using testing::random_batch;
using testing::random_matrix;

TEST(OutlierCount, CeilWithBounds) {
  EXPECT_EQ(outlier_count(0.01, 10), 1u);
  EXPECT_EQ(outlier_count(0.01, 100), 1u);
  EXPECT_EQ(outlier_count(0.01, 257), 3u);
  EXPECT_EQ(outlier_count(0.0, 7), 1u);
  EXPECT_EQ(outlier_count(1.0, 7), 7u);
}

TEST(SelectOutliers, IsotropicMetricPicksLargestColumn) {
  // Orthogonal, equal-norm rows give H0 proportional to I.
  TaggedActivations acts;
  acts.fp = Matrix(3, 3);
  for (std::size_t i = 0; i < 3; ++i) acts.fp(i, i) = 1.0;
  acts.quant = acts.fp;
  acts.tags.assign(3, Tag::kCommon);
  const Matrix w(1, 3, std::vector<double>{2.0, 3.0, 1.0});
  GateConfig cfg;
  cfg.outlier_fraction = 0.2;
  EXPECT_EQ(select_outliers(w, acts, cfg).columns, std::vector<std::size_t>{1});
}

TEST(SelectOutliers, TiesGoToLowerIndex) {
  TaggedActivations acts;
  acts.fp = Matrix::identity(4);
  acts.quant = acts.fp;
  acts.tags.assign(4, Tag::kCommon);
  const Matrix w(1, 4, 1.0);
  GateConfig cfg;
  cfg.outlier_fraction = 0.5;
  EXPECT_EQ(select_outliers(w, acts, cfg).columns, (std::vector<std::size_t>{0, 1}));
}

TEST(SelectOutliers, MatchesDenseOracle) {
  Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const TaggedActivations acts = random_batch(rng, 12, 6, 0.2);
    const Matrix w = random_matrix(rng, 4, 6);
    GateConfig cfg;
    cfg.outlier_fraction = 0.34;
    const OutlierSet got = select_outliers(w, acts, cfg);

    Matrix h = matmul(acts.quant.transposed(), acts.quant);
    const double shift = cfg.base_damp * h.trace() / 6.0;
    for (std::size_t i = 0; i < 6; ++i) h(i, i) += shift;
    const SymMatrix inv = damped_inverse(SymMatrix(h), Damping::absolute(0.0));
    std::vector<std::pair<double, std::size_t>> s;
    for (std::size_t j = 0; j < 6; ++j) {
      double n2 = 0.0;
      for (std::size_t i = 0; i < 4; ++i) n2 += w(i, j) * w(i, j);
      s.emplace_back(-n2 / inv(j, j), j);
    }
    std::sort(s.begin(), s.end());
    std::vector<std::size_t> want{s[0].second, s[1].second, s[2].second};
    std::sort(want.begin(), want.end());
    EXPECT_EQ(got.columns, want);
    double min_sel = 1e300, max_rest = -1.0;
    for (std::size_t j = 0; j < 6; ++j) {
      const bool sel = std::find(want.begin(), want.end(), j) != want.end();
      if (sel) min_sel = std::min(min_sel, got.saliences[j]);
      else max_rest = std::max(max_rest, got.saliences[j]);
    }
    EXPECT_GE(min_sel, max_rest);
  }
}

TEST(GateWeights, NoPositionFires) {
  Rng rng(62);
  const TaggedActivations acts = random_batch(rng, 20, 5, 0.3);
  const OutlierSet m{{2}, {}};
  GateConfig cfg;
  cfg.gate_threshold = std::numeric_limits<double>::infinity();
  const std::vector<double> w = rarity_weights(acts, 7.5);
  EXPECT_EQ(gate_weights(acts, m, w, cfg), weighted_moment(acts.quant, w));
}

TEST(GateWeights, EveryPositionFires) {
  Rng rng(63);
  const TaggedActivations acts = random_batch(rng, 20, 5, 0.3);
  const OutlierSet m{{0, 1, 2, 3, 4}, {}};
  GateConfig cfg;
  cfg.gate_threshold = 0.0;
  const std::vector<double> ones(20, 1.0);
  EXPECT_EQ(gate_weights(acts, m, rarity_weights(acts, 7.5), cfg),
            weighted_moment(acts.quant, ones));
}

TEST(GateWeights, MixedCaseLoopOracle) {
  TaggedActivations acts;
  acts.fp = Matrix(10, 2);
  for (std::size_t t = 0; t < 10; ++t) {
    acts.fp(t, 0) = t == 2 || t == 7 ? 10.0 : 0.5;
    acts.fp(t, 1) = 1.0;
  }
  acts.quant = acts.fp;
  acts.tags.assign(10, Tag::kTail);
  acts.tags[7] = Tag::kCommon;
  const OutlierSet m{{0}, {}};
  GateConfig cfg;
  const std::vector<double> rw = rarity_weights(acts, 4.0);
  const std::vector<double> gated = gated_weights(acts, m, rw, cfg);
  const double mean = (2 * 10.0 + 8 * 0.5 + 10 * 1.0) / 20.0;
  for (std::size_t t = 0; t < 10; ++t) {
    const bool fires = acts.quant(t, 0) > cfg.gate_threshold * mean;
    EXPECT_EQ(gated[t], fires ? 1.0 : rw[t]) << t;
  }
  EXPECT_EQ(gated[2], 1.0);
  EXPECT_EQ(gated[3], 4.0);
}

TEST(GateWeights, DimMismatch) {
  Rng rng(64);
  const TaggedActivations acts = random_batch(rng, 5, 3, 0.3);
  const std::vector<double> wrong(4, 1.0);
  EXPECT_THROW(gate_weights(acts, OutlierSet{{0}, {}}, wrong, GateConfig{}), Error);
}

TEST(SpqrTarqLayer, OutliersExactAndGateNeutralAtInfinity) {
  Rng rng(65);
  const TaggedActivations acts = random_batch(rng, 60, 10, 0.1);
  const Matrix w = random_matrix(rng, 4, 10);
  TarqConfig cfg;
  cfg.sweep.quant.group_size = 5;
  cfg.gate.outlier_fraction = 0.2;
  const LayerResult ungated = spqr_tarq_layer(w, acts, cfg, true, false);
  cfg.gate.gate_threshold = std::numeric_limits<double>::infinity();
  const LayerResult gated = spqr_tarq_layer(w, acts, cfg, true, true);
  EXPECT_EQ(gated.metric.h_rb, ungated.metric.h_rb);
  EXPECT_EQ(gated.quantized.quantized, ungated.quantized.quantized);
  const Matrix d = ungated.dequantized();
  ASSERT_EQ(ungated.quantized.kept.columns.size(), 2u);
  for (std::size_t j : ungated.quantized.kept.columns) {
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(d(i, j), w(i, j));
  }
}

TEST(SpqrTarqLayer, AllFlaggedMatchesPlainProtectedSweep) {
  Rng rng(66);
  const TaggedActivations acts = random_batch(rng, 40, 6, 0.2);
  const Matrix w = random_matrix(rng, 3, 6);
  TarqConfig cfg;
  cfg.sweep.quant.group_size = 3;
  cfg.gate.outlier_fraction = 1.0 / 6.0;
  cfg.gate.gate_threshold = 0.0;
  const LayerResult gated = spqr_tarq_layer(w, acts, cfg, true, true);
  const LayerResult plain = spqr_tarq_layer(w, acts, cfg, false, false);
  EXPECT_EQ(gated.metric.h_rb, plain.metric.h_rb);
  EXPECT_EQ(gated.quantized.quantized, plain.quantized.quantized);
}

}  // namespace
}  // namespace tarq
