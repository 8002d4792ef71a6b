#include "tarq/pipeline.hpp"

#include <array>
#include <cmath>
#include <numeric>

#include "tarq/rng.hpp"
#include "tarq/spqr_gate.hpp"

namespace tarq {
namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 9> kVariantNames{{
    {Variant::kGptq, "gptq"},
    {Variant::kRarebalOnly, "rarebal_only"},
    {Variant::kResidualOnly, "residual_only"},
    {Variant::kTarq, "tarq"},
    {Variant::kNoiseBal, "nB"},
    {Variant::kCommonBal, "cB"},
    {Variant::kSpqr, "spqr"},
    {Variant::kSpqrTarq, "spqr_tarq"},
    {Variant::kSpqrTarqGated, "spqr_tarq_gated"},
}};

bool all_zero(const Matrix& m) {
  for (double v : m.data())
    if (v != 0.0) return false;
  return true;
}

RarebalMetric plain_metric(const GroupedMoments& m) {
  RarebalMetric r;
  r.h_rb = m.h_total();
  r.lambda = 1.0;
  r.cost_ratio_c = 1.0;
  return r;
}

// Size-matched random position set used in place of the tail tags.
std::vector<Tag> noise_tags(std::size_t positions, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(positions);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<Tag> tags(positions, Tag::kCommon);
  for (std::size_t k = 0; k < count; ++k) tags[idx[k]] = Tag::kTail;
  return tags;
}

}  // namespace

OutputLosses output_losses(const Matrix& w, const Matrix& w_hat, const TaggedActivations& batch) {
  const Matrix y_fp = matmul(batch.fp, w.transposed());
  const Matrix y_q = matmul(batch.quant, w_hat.transposed());
  OutputLosses out;
  for (std::size_t t = 0; t < batch.positions(); ++t) {
    auto a = y_fp.row(t);
    auto b = y_q.row(t);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    (batch.tags[t] == Tag::kTail ? out.tail : out.common) += s;
  }
  return out;
}

std::string_view variant_name(Variant v) {
  for (const auto& [variant, name] : kVariantNames)
    if (variant == v) return name;
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name) {
  if (name == "rB") return Variant::kTarq;
  for (const auto& [variant, n] : kVariantNames)
    if (n == name) return variant;
  return std::nullopt;
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = [] {
    std::vector<Variant> out;
    for (const auto& entry : kVariantNames) out.push_back(entry.first);
    return out;
  }();
  return v;
}

Matrix compute_direction(const Matrix& w, const GroupedMoments& m, const SymMatrix& h_rb,
                         Damping delta) {
  require_dims(w.cols() == m.h_delta.rows() && m.h_delta.cols() == h_rb.dim(),
               "direction operand shapes");
  if (all_zero(m.h_delta) || all_zero(w)) return Matrix(w.rows(), w.cols());
  const SymMatrix g = damped_inverse(h_rb, delta);
  return matmul(matmul(w, m.h_delta), g.matrix());
}

double fit_alpha(const Matrix& e, const Matrix& d, const SymMatrix& h, double eps) {
  const double num = weighted_inner(e, d, h);
  const double den = weighted_inner(d, d, h) + eps;
  if (num == 0.0) return 0.0;
  return num / den;
}

LayerResult solve_layer(const Matrix& w, const GroupedMoments& moments,
                        const RarebalMetric& metric, const TarqConfig& cfg, bool residual) {
  LayerResult r;
  r.moments = moments;
  r.metric = metric;
  const SymMatrix& h = metric.h_rb;
  SweepResult pilot = gptq_sweep_protected(w, h, cfg.sweep, {});
  r.pilot = pilot.quantized;

  ResidualStep& step = r.residual;
  step.delta = cfg.delta;
  if (residual) {
    step.direction = compute_direction(w, moments, h, Damping::relative(cfg.delta));
    step.pilot_displacement = pilot.dequantized() - w;
    const double dd = weighted_inner(step.direction, step.direction, h);
    step.eps = std::max(cfg.alpha_eps_rel * dd, cfg.alpha_eps_floor);
    step.alpha = fit_alpha(step.pilot_displacement, step.direction, h, step.eps);
    step.target = Matrix(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j)
        step.target(i, j) = w(i, j) + step.alpha * step.direction(i, j);
    r.quantized = gptq_sweep_protected(step.target, h, cfg.sweep, {});
  } else {
    step.direction = Matrix(w.rows(), w.cols());
    step.pilot_displacement = pilot.dequantized() - w;
    step.target = w;
    r.quantized = std::move(pilot);
  }

  const Matrix dw = w - r.dequantized();
  const GroupLosses gl = group_losses(dw, moments);
  r.losses = {gl.common, gl.tail, weighted_loss(dw, h)};
  const double mass = moments.h_common.trace() + moments.h_tail.trace();
  r.rare_mass_share = mass > 0.0 ? rare_mass_share(moments) : 0.0;
  return r;
}

LayerResult tarq_layer(const Matrix& w, const TaggedActivations& batch, const TarqConfig& cfg) {
  return ablation_variant(w, batch, cfg, Variant::kTarq);
}

LayerResult ablation_variant(const Matrix& w, const TaggedActivations& batch,
                             const TarqConfig& cfg, Variant variant) {
  batch.validate();
  require_dims(w.cols() == batch.dim(), "weight columns != activation width");
  const GroupedMoments m = accumulate_moments(batch);
  LayerResult r;
  switch (variant) {
    case Variant::kGptq:
      r = solve_layer(w, m, plain_metric(m), cfg, false);
      break;
    case Variant::kResidualOnly:
      r = solve_layer(w, m, plain_metric(m), cfg, true);
      break;
    case Variant::kRarebalOnly:
    case Variant::kTarq:
      r = solve_layer(w, m, rarebal_metric(m, cfg.cost_ratio_c, relative_eps(m, cfg.eps_rel)), cfg,
                      variant == Variant::kTarq);
      break;
    case Variant::kNoiseBal: {
      TaggedActivations shuffled{batch.fp, batch.quant,
                                 noise_tags(batch.positions(), batch.tail_count(), cfg.seed)};
      const GroupedMoments noise = accumulate_moments(shuffled);
      r = solve_layer(w, m, rarebal_metric(noise, cfg.cost_ratio_c, relative_eps(noise, cfg.eps_rel)),
                      cfg, true);
      break;
    }
    case Variant::kCommonBal: {
      // The rB coefficient applied to the common slice instead of the tail.
      const RarebalMetric rb = rarebal_metric(m, cfg.cost_ratio_c, relative_eps(m, cfg.eps_rel));
      RarebalMetric cb = rb;
      cb.h_rb = SymMatrix(rb.lambda * m.h_common.matrix() + m.h_tail.matrix());
      r = solve_layer(w, m, cb, cfg, true);
      break;
    }
    case Variant::kSpqr:
      return spqr_tarq_layer(w, batch, cfg, false, false);
    case Variant::kSpqrTarq:
      return spqr_tarq_layer(w, batch, cfg, true, false);
    case Variant::kSpqrTarqGated:
      return spqr_tarq_layer(w, batch, cfg, true, true);
  }
  r.output_losses = output_losses(w, r.dequantized(), batch);
  return r;
}

Matrix advance_stream(const Matrix& x, const Matrix& w, bool apply_nonlinearity) {
  Matrix y = matmul(x, w.transposed());
  if (apply_nonlinearity)
    for (double& v : y.data()) v = std::tanh(v);
  return y;
}

std::vector<LayerResult> sequential_sweep(const SweepInputs& in, const TarqConfig& cfg,
                                          Variant variant) {
  if (in.layers.empty()) throw Error(ErrorCode::kShapeChainMismatch, "no layers");
  if (in.inputs.cols() != in.layers.front().cols()) {
    throw Error(ErrorCode::kShapeChainMismatch, "input width != first layer columns");
  }
  for (std::size_t l = 1; l < in.layers.size(); ++l) {
    if (in.layers[l].cols() != in.layers[l - 1].rows()) {
      throw Error(ErrorCode::kShapeChainMismatch,
                  "layer " + std::to_string(l) + " input width != previous output width");
    }
  }
  std::vector<LayerResult> results;
  results.reserve(in.layers.size());
  Matrix x_fp = in.inputs;
  Matrix x_q = in.inputs;
  for (std::size_t l = 0; l < in.layers.size(); ++l) {
    const Matrix& w = in.layers[l];
    TaggedActivations batch{x_fp, x_q, in.tags};
    results.push_back(ablation_variant(w, batch, cfg, variant));
    const bool last = l + 1 == in.layers.size();
    if (!last) {
      x_fp = advance_stream(x_fp, w, true);
      x_q = advance_stream(x_q, results.back().dequantized(), true);
    }
  }
  return results;
}

}  // namespace tarq
