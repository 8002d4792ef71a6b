#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "tarq/layer.hpp"

namespace tarq {

enum class Variant {
  kGptq,           // plain metric h_common + h_tail, no residual
  kRarebalOnly,    // rebalanced metric, no residual
  kResidualOnly,   // plain metric with residual correction under it
  kTarq,           // rebalanced metric plus residual (also the rB source)
  kNoiseBal,       // nB: size-matched random positions upweighted, plus residual
  kCommonBal,      // cB: common slice upweighted by lambda, plus residual
  kSpqr,           // outlier columns kept, plain metric
  kSpqrTarq,       // outlier columns kept, rarity-weighted metric
  kSpqrTarqGated,  // as above with the outlier gate on the rarity weights
};

std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);
const std::vector<Variant>& all_variants();

// W h_delta (h_rb + delta I)^-1; zero without touching h_rb when h_delta is zero.
Matrix compute_direction(const Matrix& w, const GroupedMoments& m, const SymMatrix& h_rb,
                         Damping delta);

// <E, D>_H / (<D, D>_H + eps).
double fit_alpha(const Matrix& e, const Matrix& d, const SymMatrix& h, double eps);

// Pilot sweep under `metric.h_rb`, optionally followed by the residual step and
// a second sweep of the shifted target under the same metric.
LayerResult solve_layer(const Matrix& w, const GroupedMoments& moments,
                        const RarebalMetric& metric, const TarqConfig& cfg, bool residual);

LayerResult tarq_layer(const Matrix& w, const TaggedActivations& batch, const TarqConfig& cfg);

LayerResult ablation_variant(const Matrix& w, const TaggedActivations& batch,
                             const TarqConfig& cfg, Variant variant);

struct SweepInputs {
  std::vector<Matrix> layers;  // layer l maps width layers[l].cols() to layers[l].rows()
  Matrix inputs;               // N x layers[0].cols(), full-precision network input
  std::vector<Tag> tags;       // constant across layers
};

// Visits layers in order keeping a full-precision and a quantized activation
// stream; tanh is applied between layers (not after the last). Throws
// ShapeChainMismatch when consecutive widths disagree.
std::vector<LayerResult> sequential_sweep(const SweepInputs& in, const TarqConfig& cfg,
                                          Variant variant);

// Per-group |W x_fp - W_hat x_q|^2 summed over the batch.
OutputLosses output_losses(const Matrix& w, const Matrix& w_hat, const TaggedActivations& batch);

// tanh(X W^T), or X W^T for the last layer.
Matrix advance_stream(const Matrix& x, const Matrix& w, bool apply_nonlinearity);

}  // namespace tarq
