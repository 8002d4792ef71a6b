#include "tarq/gptq.hpp"

#include <vector>

namespace tarq {
namespace {

void sweep_row(std::span<const double> w_row, std::span<const double> scale_row,
               const Matrix& u, const SweepConfig& cfg, std::span<const std::uint8_t> protect,
               std::span<std::int8_t> codes_out, std::vector<double>& work) {
  const std::size_t n = w_row.size();
  const std::size_t g = cfg.quant.group_size;
  work.assign(w_row.begin(), w_row.end());
  for (std::size_t j = 0; j < n; ++j) {
    double target;
    if (!protect.empty() && protect[j]) {
      target = w_row[j];
      codes_out[j] = 0;
    } else {
      const double s = scale_row[j / g];
      const int code = quantize_value(work[j], s, cfg.quant);
      codes_out[j] = static_cast<std::int8_t>(code);
      target = s * static_cast<double>(code);
    }
    const double e = (work[j] - target) / u(j, j);
    auto urow = u.row(j);
    for (std::size_t k = j + 1; k < n; ++k) work[k] -= e * urow[k];
  }
}

}  // namespace

SweepResult gptq_sweep_protected(const Matrix& w, const SymMatrix& h, const SweepConfig& cfg,
                                 std::span<const std::uint8_t> protect) {
  cfg.quant.validate();
  require_dims(w.cols() == h.dim(), "metric dimension != weight columns");
  require_dims(protect.empty() || protect.size() == w.cols(), "protect mask length");
  require_dims(w.cols() >= 1, "weight has no columns");
  if (cfg.act_order) throw Error(ErrorCode::kBadSpec, "act_order is not supported");

  const CholFactor factor = cholesky_of_inverse(h, Damping::relative(cfg.percdamp));
  SweepResult result;
  QuantizedTensor& q = result.quantized;
  q.rows = w.rows();
  q.cols = w.cols();
  q.config = cfg.quant;
  q.scales = group_scales(w, cfg.quant, protect);
  q.codes.assign(w.size(), 0);

#pragma omp parallel
  {
    std::vector<double> work;
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(w.rows()); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      sweep_row(w.row(i), q.scales.row(i), factor.upper, cfg, protect,
                std::span<std::int8_t>(q.codes.data() + i * q.cols, q.cols), work);
    }
  }

  if (!protect.empty()) {
    for (std::size_t j = 0; j < w.cols(); ++j)
      if (protect[j]) result.kept.columns.push_back(j);
    result.kept.values = Matrix(w.rows(), result.kept.columns.size());
    for (std::size_t k = 0; k < result.kept.columns.size(); ++k)
      for (std::size_t i = 0; i < w.rows(); ++i)
        result.kept.values(i, k) = w(i, result.kept.columns[k]);
  }
  return result;
}

QuantizedTensor gptq_sweep(const Matrix& w, const SymMatrix& h, const SweepConfig& cfg) {
  return gptq_sweep_protected(w, h, cfg, {}).quantized;
}

double sweep_loss_report(const Matrix& w, const QuantizedTensor& q, const SymMatrix& h) {
  return weighted_loss(w - dequantize(q), h);
}

}  // namespace tarq
