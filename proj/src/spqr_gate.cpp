#include "tarq/spqr_gate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tarq/pipeline.hpp"

namespace tarq {

std::vector<std::uint8_t> OutlierSet::mask(std::size_t dim) const {
  std::vector<std::uint8_t> m(dim, 0);
  for (std::size_t j : columns) m[j] = 1;
  return m;
}

std::size_t outlier_count(double outlier_fraction, std::size_t dim) {
  const auto k = static_cast<std::size_t>(std::ceil(outlier_fraction * static_cast<double>(dim)));
  return std::clamp<std::size_t>(k, 1, dim);
}

OutlierSet select_outliers(const Matrix& w, const TaggedActivations& acts, const GateConfig& cfg) {
  acts.validate();
  const std::size_t d = acts.dim();
  require_dims(w.cols() == d, "weight columns != activation width");
  const std::vector<double> ones(acts.positions(), 1.0);
  const SymMatrix h = weighted_moment(acts.quant, ones);
  // Damping uses the undamped trace.
  const double shift = cfg.base_damp * h.trace() / static_cast<double>(d);
  const SymMatrix h_inv = damped_inverse(h, Damping::absolute(shift));

  OutlierSet out;
  out.saliences.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    double norm2 = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) norm2 += w(i, j) * w(i, j);
    out.saliences[j] = norm2 / h_inv(j, j);
  }
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.saliences[a] > out.saliences[b];
  });
  order.resize(outlier_count(cfg.outlier_fraction, d));
  std::sort(order.begin(), order.end());
  out.columns = std::move(order);
  return out;
}

std::vector<double> gated_weights(const TaggedActivations& acts, const OutlierSet& outliers,
                                  std::span<const double> rarity_weights, const GateConfig& cfg) {
  acts.validate();
  require_dims(rarity_weights.size() == acts.positions(), "rarity weight count != positions");
  const Matrix& x = acts.quant;
  double abs_sum = 0.0;
  for (double v : x.data()) abs_sum += std::abs(v);
  const double mean_abs = abs_sum / static_cast<double>(x.size());
  const double threshold = cfg.gate_threshold * mean_abs;

  std::vector<double> out(rarity_weights.begin(), rarity_weights.end());
  for (std::size_t t = 0; t < acts.positions(); ++t) {
    double peak = 0.0;
    for (std::size_t j : outliers.columns) {
      require_dims(j < x.cols(), "outlier column out of range");
      peak = std::max(peak, std::abs(x(t, j)));
    }
    if (peak > threshold) out[t] = 1.0;
  }
  return out;
}

SymMatrix gate_weights(const TaggedActivations& acts, const OutlierSet& outliers,
                       std::span<const double> rarity_weights, const GateConfig& cfg) {
  const std::vector<double> w = gated_weights(acts, outliers, rarity_weights, cfg);
  return weighted_moment(acts.quant, w);
}

std::vector<double> rarity_weights(const TaggedActivations& acts, double lambda) {
  std::vector<double> w(acts.positions());
  for (std::size_t t = 0; t < w.size(); ++t) w[t] = acts.tags[t] == Tag::kTail ? lambda : 1.0;
  return w;
}

LayerResult spqr_tarq_layer(const Matrix& w, const TaggedActivations& batch,
                            const TarqConfig& cfg, bool use_rarity, bool gate_enabled) {
  batch.validate();
  require_dims(w.cols() == batch.dim(), "weight columns != activation width");
  const GroupedMoments m = accumulate_moments(batch);
  const OutlierSet outliers = select_outliers(w, batch, cfg.gate);

  RarebalMetric metric;
  metric.cost_ratio_c = cfg.cost_ratio_c;
  metric.lambda = 1.0;
  if (use_rarity) {
    const RarebalMetric rb = rarebal_metric(m, cfg.cost_ratio_c, relative_eps(m, cfg.eps_rel));
    metric.lambda = rb.lambda;
    metric.eps = rb.eps;
  }
  std::vector<double> weights = rarity_weights(batch, metric.lambda);
  if (gate_enabled) weights = gated_weights(batch, outliers, weights, cfg.gate);
  metric.h_rb = weighted_moment(batch.quant, weights);

  const std::vector<std::uint8_t> protect = outliers.mask(w.cols());

  LayerResult r;
  r.moments = m;
  r.metric = metric;
  r.quantized = gptq_sweep_protected(w, metric.h_rb, cfg.sweep, protect);
  r.pilot = r.quantized.quantized;
  r.residual.direction = Matrix(w.rows(), w.cols());
  r.residual.target = w;
  r.residual.delta = cfg.delta;
  const Matrix w_hat = r.dequantized();
  r.residual.pilot_displacement = w_hat - w;
  const Matrix dw = w - w_hat;
  const GroupLosses gl = group_losses(dw, m);
  r.losses = {gl.common, gl.tail, weighted_loss(dw, metric.h_rb)};
  const double mass = m.h_common.trace() + m.h_tail.trace();
  r.rare_mass_share = mass > 0.0 ? rare_mass_share(m) : 0.0;

  r.output_losses = output_losses(w, w_hat, batch);
  return r;
}

}  // namespace tarq
