#pragma once

// Serial reference kernels. They follow the textbook loop order and share no
// code with the OpenMP paths, so tests can check the parallel kernels
// bit-for-bit and the benchmark can compare the two.

#include <span>

#include "tarq/gptq.hpp"
#include "tarq/stats.hpp"

namespace tarq::reference {

// Column-outer sweep over all rows at once.
SweepResult gptq_sweep(const Matrix& w, const SymMatrix& h, const SweepConfig& cfg,
                       std::span<const std::uint8_t> protect = {});

// Rank-one updates position by position.
GroupedMoments accumulate_moments(const TaggedActivations& batch);

// Triple loop sum_i sum_j sum_k A_ij H_jk B_ik.
double weighted_inner(const Matrix& a, const Matrix& b, const SymMatrix& h);

}  // namespace tarq::reference
