#include "tarq/stats.hpp"

#include <algorithm>
#include <vector>

namespace tarq {

std::size_t TaggedActivations::tail_count() const {
  return static_cast<std::size_t>(std::count(tags.begin(), tags.end(), Tag::kTail));
}

void TaggedActivations::validate() const {
  if (tags.empty()) throw Error(ErrorCode::kEmptyBatch, "calibration batch has no positions");
  require_dims(quant.rows() == tags.size(), "quantized stream rows != tag count");
  require_dims(fp.rows() == tags.size(), "full-precision stream rows != tag count");
  require_dims(fp.cols() == quant.cols(), "activation stream widths differ");
}

SymMatrix GroupedMoments::h_total() const {
  return SymMatrix(h_common.matrix() + h_tail.matrix());
}

namespace {

// Entry (i, j) accumulates over positions in ascending order; parallel over i
// only, so results are bit-identical for any thread count.
Matrix moment_kernel(const Matrix& a, const Matrix& b, std::span<const double> weights,
                     bool symmetric) {
  const std::size_t n_pos = a.rows();
  const std::size_t n = a.cols();
  Matrix h(n, n);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    auto hrow = h.row(i);
    const std::size_t j0 = symmetric ? i : 0;
    for (std::size_t t = 0; t < n_pos; ++t) {
      const double w = weights[t];
      if (w == 0.0) continue;
      const double ai = w * a(t, i);
      auto brow = b.row(t);
      for (std::size_t j = j0; j < n; ++j) hrow[j] += ai * brow[j];
    }
  }
  if (symmetric) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) h(i, j) = h(j, i);
  }
  return h;
}

}  // namespace

SymMatrix weighted_moment(const Matrix& x, std::span<const double> weights) {
  require_dims(weights.size() == x.rows(), "weight count != positions");
  return SymMatrix(moment_kernel(x, x, weights, true));
}

GroupedMoments accumulate_moments(const TaggedActivations& batch) {
  batch.validate();
  const std::size_t n_pos = batch.positions();
  std::vector<double> common_w(n_pos), tail_w(n_pos), all_w(n_pos, 1.0);
  for (std::size_t t = 0; t < n_pos; ++t) {
    const bool tail = batch.tags[t] == Tag::kTail;
    common_w[t] = tail ? 0.0 : 1.0;
    tail_w[t] = tail ? 1.0 : 0.0;
  }
  GroupedMoments m;
  m.h_common = weighted_moment(batch.quant, common_w);
  m.h_tail = weighted_moment(batch.quant, tail_w);
  m.h_delta = moment_kernel(batch.fp - batch.quant, batch.quant, all_w, false);
  m.n_tail = batch.tail_count();
  m.n_common = n_pos - m.n_tail;
  return m;
}

RarebalMetric rarebal_metric(const GroupedMoments& m, double c, double eps) {
  const double tr_common = m.h_common.trace();
  const double tr_tail = m.h_tail.trace();
  const double denom = tr_tail + eps;
  RarebalMetric r;
  r.cost_ratio_c = c;
  r.eps = eps;
  // No tail mass and no epsilon: any finite lambda gives h_rb = h_common.
  r.lambda = denom > 0.0 ? c * tr_common / denom : c;
  const std::size_t n = m.h_common.dim();
  Matrix h(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) h(i, j) = m.h_common(i, j) + r.lambda * m.h_tail(i, j);
  r.h_rb = SymMatrix(std::move(h));
  return r;
}

double relative_eps(const GroupedMoments& m, double eps_rel) {
  return eps_rel * m.h_common.trace();
}

GroupLosses group_losses(const Matrix& delta_w, const GroupedMoments& m) {
  return {weighted_loss(delta_w, m.h_common), weighted_loss(delta_w, m.h_tail)};
}

MixtureDecomposition mixture_decompose(const TaggedActivations& batch, const Matrix& delta_w) {
  batch.validate();
  require_dims(delta_w.cols() == batch.dim(), "delta W columns != activation width");
  const std::size_t n_pos = batch.positions();
  std::vector<double> per_pos(n_pos);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t tt = 0; tt < static_cast<std::ptrdiff_t>(n_pos); ++tt) {
    const auto t = static_cast<std::size_t>(tt);
    auto x = batch.quant.row(t);
    double s = 0.0;
    for (std::size_t i = 0; i < delta_w.rows(); ++i) {
      auto r = delta_w.row(i);
      double y = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) y += r[j] * x[j];
      s += y * y;
    }
    per_pos[t] = s;
  }
  double sum_all = 0.0, sum_common = 0.0, sum_tail = 0.0;
  std::size_t n_tail = 0;
  for (std::size_t t = 0; t < n_pos; ++t) {
    sum_all += per_pos[t];
    if (batch.tags[t] == Tag::kTail) {
      sum_tail += per_pos[t];
      ++n_tail;
    } else {
      sum_common += per_pos[t];
    }
  }
  const std::size_t n_common = n_pos - n_tail;
  MixtureDecomposition d;
  d.l_rec = sum_all / static_cast<double>(n_pos);
  d.tail_share = static_cast<double>(n_tail) / static_cast<double>(n_pos);
  d.l_common_avg = n_common ? sum_common / static_cast<double>(n_common) : 0.0;
  d.l_tail_avg = n_tail ? sum_tail / static_cast<double>(n_tail) : 0.0;
  return d;
}

double rare_mass_share(const GroupedMoments& m) {
  const double tc = m.h_common.trace();
  const double tt = m.h_tail.trace();
  if (!(tc + tt > 0.0)) throw Error(ErrorCode::kEmptyBatch, "no second-moment mass");
  return tt / (tc + tt);
}

}  // namespace tarq
