#include "tarq/reference.hpp"

namespace tarq::reference {

SweepResult gptq_sweep(const Matrix& w, const SymMatrix& h, const SweepConfig& cfg,
                       std::span<const std::uint8_t> protect) {
  cfg.quant.validate();
  require_dims(w.cols() == h.dim(), "metric dimension != weight columns");
  require_dims(protect.empty() || protect.size() == w.cols(), "protect mask length");
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const CholFactor factor = cholesky_of_inverse(h, Damping::relative(cfg.percdamp));
  const Matrix& u = factor.upper;

  SweepResult result;
  QuantizedTensor& q = result.quantized;
  q.rows = m;
  q.cols = n;
  q.config = cfg.quant;
  q.scales = group_scales(w, cfg.quant, protect);
  q.codes.assign(m * n, 0);

  Matrix work = w;
  for (std::size_t j = 0; j < n; ++j) {
    const bool keep = !protect.empty() && protect[j];
    for (std::size_t i = 0; i < m; ++i) {
      double target = w(i, j);
      if (!keep) {
        const double s = q.scales(i, j / cfg.quant.group_size);
        const int code = quantize_value(work(i, j), s, cfg.quant);
        q.codes[i * n + j] = static_cast<std::int8_t>(code);
        target = s * static_cast<double>(code);
      }
      const double e = (work(i, j) - target) / u(j, j);
      for (std::size_t k = j + 1; k < n; ++k) work(i, k) -= e * u(j, k);
    }
  }
  if (!protect.empty()) {
    for (std::size_t j = 0; j < n; ++j)
      if (protect[j]) result.kept.columns.push_back(j);
    result.kept.values = Matrix(m, result.kept.columns.size());
    for (std::size_t k = 0; k < result.kept.columns.size(); ++k)
      for (std::size_t i = 0; i < m; ++i) result.kept.values(i, k) = w(i, result.kept.columns[k]);
  }
  return result;
}

GroupedMoments accumulate_moments(const TaggedActivations& batch) {
  batch.validate();
  const std::size_t n = batch.dim();
  Matrix hc(n, n), ht(n, n), hd(n, n);
  GroupedMoments m;
  for (std::size_t t = 0; t < batch.positions(); ++t) {
    auto xq = batch.quant.row(t);
    auto xf = batch.fp.row(t);
    const bool tail = batch.tags[t] == Tag::kTail;
    Matrix& target = tail ? ht : hc;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        target(i, j) += xq[i] * xq[j];
        hd(i, j) += (xf[i] - xq[i]) * xq[j];
      }
    }
    (tail ? m.n_tail : m.n_common) += 1;
  }
  m.h_common = SymMatrix(std::move(hc));
  m.h_tail = SymMatrix(std::move(ht));
  m.h_delta = std::move(hd);
  return m;
}

double weighted_inner(const Matrix& a, const Matrix& b, const SymMatrix& h) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols() && a.cols() == h.dim(),
               "weighted_inner shapes");
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, j) * h(j, k) * b(i, k);
  return s;
}

}  // namespace tarq::reference
