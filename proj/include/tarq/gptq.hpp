#pragma once

#include <span>

#include "tarq/lattice.hpp"
#include "tarq/linalg.hpp"

namespace tarq {

struct SweepConfig {
  QuantConfig quant;
  double percdamp = 0.01;  // shift = percdamp * mean(diag(H))
  bool act_order = false;  // column reordering is not supported
};

struct SweepResult {
  QuantizedTensor quantized;
  FpColumns kept;  // empty unless columns were protected

  Matrix dequantized() const { return dequantize(quantized, kept); }
};

// Column sweep under metric H. Group scales come from the input W before any
// error propagation. Columns are visited in natural order; quantizing column j
// pushes its normalized error into columns j+1.. through row j of the upper
// Cholesky factor of (H + damp I)^-1. Rows are independent and run in parallel.
QuantizedTensor gptq_sweep(const Matrix& w, const SymMatrix& h, const SweepConfig& cfg);

// Same sweep with some columns held at their original values. Protected
// columns take no part in group ranges, get code 0, and their exact values are
// returned in `kept`. The error between the propagated and original value of a
// protected column is still pushed forward.
SweepResult gptq_sweep_protected(const Matrix& w, const SymMatrix& h, const SweepConfig& cfg,
                                 std::span<const std::uint8_t> protect);

// weighted_loss(W - dequantize(q), H).
double sweep_loss_report(const Matrix& w, const QuantizedTensor& q, const SymMatrix& h);

}  // namespace tarq
