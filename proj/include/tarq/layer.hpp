#pragma once

#include <cstdint>

#include "tarq/gptq.hpp"
#include "tarq/stats.hpp"

namespace tarq {

struct GateConfig {
  double outlier_fraction = 0.01;  // share of input columns kept at full precision
  double gate_threshold = 3.0;     // multiple of the global mean |x|
  double base_damp = 0.01;         // salience metric damping, times tr(H0)/d
};

struct TarqConfig {
  SweepConfig sweep;
  double cost_ratio_c = 1.0;
  double eps_rel = 1e-8;         // lambda epsilon, times tr(h_common)
  double delta = 0.01;           // residual damping, times mean(diag(h_rb))
  double alpha_eps_rel = 1e-12;  // alpha epsilon, times <D, D>_H
  double alpha_eps_floor = 1e-30;
  GateConfig gate;
  std::uint64_t seed = 0;  // only the noise-control variant draws from it
};

struct ResidualStep {
  Matrix direction;           // D
  double alpha = 0.0;
  Matrix pilot_displacement;  // E = dequant(pilot) - W
  Matrix target;              // W + alpha D
  double delta = 0.0;
  double eps = 0.0;
};

struct LayerLosses {
  double common = 0.0;    // tr(dW H_common dW^T)
  double tail = 0.0;      // tr(dW H_tail dW^T)
  double weighted = 0.0;  // tr(dW H dW^T) under the metric the sweep used
};

// Per-group layer output error against the full-precision trajectory:
// sum over positions in the group of |W x_fp - W_hat x_q|^2.
struct OutputLosses {
  double common = 0.0;
  double tail = 0.0;
};

struct LayerResult {
  SweepResult quantized;
  QuantizedTensor pilot;
  GroupedMoments moments;  // true-tag moments of the layer input
  RarebalMetric metric;    // metric handed to the sweep
  ResidualStep residual;
  LayerLosses losses;
  OutputLosses output_losses;
  double rare_mass_share = 0.0;

  Matrix dequantized() const { return quantized.dequantized(); }
};

}  // namespace tarq
