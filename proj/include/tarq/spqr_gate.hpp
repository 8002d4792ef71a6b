#pragma once

#include <vector>

#include "tarq/layer.hpp"

namespace tarq {

struct OutlierSet {
  std::vector<std::size_t> columns;  // ascending
  std::vector<double> saliences;     // one per input column

  std::vector<std::uint8_t> mask(std::size_t dim) const;
};

// ceil(rho * d), at least 1 and at most d.
std::size_t outlier_count(double outlier_fraction, std::size_t dim);

// Salience s_j = |W_:,j|^2 / [H0^-1]_jj with H0 = X^T X + base_damp tr(X^T X)/d I
// over the quantized stream. Keeps the top outlier_count columns; ties go to
// the lower index.
OutlierSet select_outliers(const Matrix& w, const TaggedActivations& acts, const GateConfig& cfg);

// Rarity weights after the gate: a position whose largest |x| over the outlier
// columns exceeds gate_threshold times the global mean |x| gets weight 1.
std::vector<double> gated_weights(const TaggedActivations& acts, const OutlierSet& outliers,
                                  std::span<const double> rarity_weights, const GateConfig& cfg);

// sum_t w~_t x_t x_t^T with the gated weights.
SymMatrix gate_weights(const TaggedActivations& acts, const OutlierSet& outliers,
                       std::span<const double> rarity_weights, const GateConfig& cfg);

// Rarity weights lambda on tail positions and 1 on common positions.
std::vector<double> rarity_weights(const TaggedActivations& acts, double lambda);

// Outlier columns stay exact; the rest are swept under the (optionally
// rarity-weighted, optionally gated) metric. No residual step.
LayerResult spqr_tarq_layer(const Matrix& w, const TaggedActivations& batch,
                            const TarqConfig& cfg, bool use_rarity, bool gate_enabled);

}  // namespace tarq
