#pragma once

#include <cstdint>
#include <vector>

#include "tarq/linalg.hpp"
#include "tarq/matrix.hpp"

namespace tarq {

enum class Tag : std::uint8_t { kCommon = 0, kTail = 1 };

// Paired calibration activations entering one layer. Row t of `fp` and `quant`
// is position t; `tags[t]` says whether it belongs to the lexical tail.
struct TaggedActivations {
  Matrix fp;     // N x n, full-precision stream
  Matrix quant;  // N x n, partially-quantized stream
  std::vector<Tag> tags;

  std::size_t dim() const { return quant.cols(); }
  std::size_t positions() const { return tags.size(); }
  std::size_t tail_count() const;

  // Throws DimMismatch on inconsistent shapes, EmptyBatch when there are no
  // positions.
  void validate() const;
};

struct GroupedMoments {
  SymMatrix h_common;
  SymMatrix h_tail;
  Matrix h_delta;  // sum over all positions of (x_fp - x_q) x_q^T
  std::size_t n_common = 0;
  std::size_t n_tail = 0;

  SymMatrix h_total() const;  // h_common + h_tail
};

struct RarebalMetric {
  SymMatrix h_rb;
  double lambda = 0.0;
  double cost_ratio_c = 1.0;
  double eps = 0.0;
};

GroupedMoments accumulate_moments(const TaggedActivations& batch);

// Sum of w_t x_t x_t^T over the quantized stream, positions in order.
SymMatrix weighted_moment(const Matrix& x, std::span<const double> weights);

// lambda = c tr(h_common) / (tr(h_tail) + eps); h_rb = h_common + lambda h_tail.
RarebalMetric rarebal_metric(const GroupedMoments& m, double c, double eps);

// Absolute epsilon for a relative setting: eps_rel * tr(h_common).
double relative_eps(const GroupedMoments& m, double eps_rel);

struct GroupLosses {
  double common = 0.0;
  double tail = 0.0;
};

GroupLosses group_losses(const Matrix& delta_w, const GroupedMoments& m);

struct MixtureDecomposition {
  double l_rec = 0.0;         // (1/N) sum_t |dW x_t|^2
  double tail_share = 0.0;    // p = N_tail / N
  double l_common_avg = 0.0;  // zero when there are no common positions
  double l_tail_avg = 0.0;    // zero when there are no tail positions
};

MixtureDecomposition mixture_decompose(const TaggedActivations& batch, const Matrix& delta_w);

// tr(h_tail) / (tr(h_common) + tr(h_tail)).
double rare_mass_share(const GroupedMoments& m);

}  // namespace tarq
