#include "tarq/harness.hpp"

#include <cmath>
#include <exception>
#include <numbers>
#include <numeric>

#include "tarq/report.hpp"
#include "tarq/rng.hpp"

namespace tarq {
namespace {

constexpr std::uint64_t kNoiseStream = 0x6e42;

Matrix random_orthogonal(std::size_t n, Rng& rng) {
  Matrix q(n, n);
  for (double& v : q.data()) v = rng.normal();
  // Modified Gram-Schmidt over rows.
  for (std::size_t i = 0; i < n; ++i) {
    auto ri = q.row(i);
    for (std::size_t k = 0; k < i; ++k) {
      auto rk = q.row(k);
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += ri[j] * rk[j];
      for (std::size_t j = 0; j < n; ++j) ri[j] -= dot * rk[j];
    }
    double norm = 0.0;
    for (double v : ri) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : ri) v /= norm;
  }
  return q.transposed();  // columns are the basis vectors
}

// Givens rotations by theta in planes (k, n-1-k).
Matrix pair_rotation(std::size_t n, double degrees) {
  Matrix r = Matrix::identity(n);
  const double th = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(th);
  const double s = std::sin(th);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const std::size_t a = k;
    const std::size_t b = n - 1 - k;
    r(a, a) = c;
    r(b, b) = c;
    r(a, b) = -s;
    r(b, a) = s;
  }
  return r;
}

std::vector<double> spectrum(std::size_t n, double decay, double scale) {
  std::vector<double> d(n);
  for (std::size_t k = 0; k < n; ++k) d[k] = scale * std::pow(decay, static_cast<double>(k));
  return d;
}

// Columns of the returned matrix map white noise to the group distribution.
Matrix sampler(const Matrix& basis, const std::vector<double>& eig) {
  Matrix a = basis;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) *= std::sqrt(eig[j]);
  return a;
}

Matrix basis_for(const SyntheticSpec& spec, bool tail) {
  Rng rng(spec.seed);
  const std::size_t n = spec.layer_dims.front();
  Matrix q = random_orthogonal(n, rng);
  if (!tail) return q;
  return matmul(q, pair_rotation(n, spec.tail_rotation_deg));
}

Matrix covariance_of(const Matrix& a) { return matmul(a, a.transposed()); }

void add_stats(LayerStats& acc, const LayerStats& s) {
  acc.rare_mass_share += s.rare_mass_share;
  acc.lambda += s.lambda;
  acc.alpha += s.alpha;
  acc.common_loss += s.common_loss;
  acc.tail_loss += s.tail_loss;
  acc.weighted_loss += s.weighted_loss;
  acc.output_common_loss += s.output_common_loss;
  acc.output_tail_loss += s.output_tail_loss;
}

void scale_stats(LayerStats& s, double k) {
  s.rare_mass_share *= k;
  s.lambda *= k;
  s.alpha *= k;
  s.common_loss *= k;
  s.tail_loss *= k;
  s.weighted_loss *= k;
  s.output_common_loss *= k;
  s.output_tail_loss *= k;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (layer_dims.size() < 2) throw Error(ErrorCode::kBadSpec, "need at least one layer");
  for (auto d : layer_dims)
    if (d < 2) throw Error(ErrorCode::kBadSpec, "layer widths must be >= 2");
  if (!(tail_share > 0.0 && tail_share < 1.0)) {
    throw Error(ErrorCode::kBadSpec, "tail_share must lie in (0, 1)");
  }
  if (positions == 0) throw Error(ErrorCode::kBadSpec, "positions must be positive");
  if (!(common_decay > 0.0 && tail_decay > 0.0 && tail_scale > 0.0)) {
    throw Error(ErrorCode::kBadSpec, "spectra must be positive");
  }
}

std::size_t SyntheticSpec::tail_positions() const {
  return static_cast<std::size_t>(std::llround(tail_share * static_cast<double>(positions)));
}

Matrix common_covariance(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.layer_dims.front();
  return covariance_of(sampler(basis_for(spec, false), spectrum(n, spec.common_decay, 1.0)));
}

Matrix tail_covariance(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.layer_dims.front();
  return covariance_of(
      sampler(basis_for(spec, true), spectrum(n, spec.tail_decay, spec.tail_scale)));
}

SyntheticBatch generate_batch(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n0 = spec.layer_dims.front();
  const Matrix common_a = sampler(basis_for(spec, false), spectrum(n0, spec.common_decay, 1.0));
  const Matrix tail_a =
      sampler(basis_for(spec, true), spectrum(n0, spec.tail_decay, spec.tail_scale));

  Rng rng(Rng::derive(spec.seed, 1));
  SyntheticBatch b;
  for (std::size_t l = 0; l + 1 < spec.layer_dims.size(); ++l) {
    const std::size_t in = spec.layer_dims[l];
    const std::size_t out = spec.layer_dims[l + 1];
    Matrix w(out, in);
    const double sd = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.data()) v = sd * rng.normal();
    b.layers.push_back(std::move(w));
  }

  const std::size_t n_pos = spec.positions;
  const std::size_t n_tail = spec.tail_positions();
  std::vector<std::size_t> order(n_pos);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  b.tags.assign(n_pos, Tag::kCommon);
  for (std::size_t k = 0; k < n_tail; ++k) b.tags[order[k]] = Tag::kTail;

  b.inputs = Matrix(n_pos, n0);
  b.zipf.resize(n_pos);
  std::vector<double> z(n0);
  for (std::size_t t = 0; t < n_pos; ++t) {
    const bool tail = b.tags[t] == Tag::kTail;
    const Matrix& a = tail ? tail_a : common_a;
    for (double& v : z) v = rng.normal();
    auto x = b.inputs.row(t);
    for (std::size_t i = 0; i < n0; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n0; ++j) s += a(i, j) * z[j];
      x[i] = s;
    }
    b.zipf[t] = tail ? rng.uniform(1.5, 3.0) : rng.uniform(3.0, 7.0);
  }
  return b;
}

std::vector<Tag> tags_at(const std::vector<double>& zipf, double threshold) {
  std::vector<Tag> tags(zipf.size());
  for (std::size_t t = 0; t < zipf.size(); ++t)
    tags[t] = zipf[t] < threshold ? Tag::kTail : Tag::kCommon;
  return tags;
}

std::vector<LayerStats> evaluate_chain(const SweepInputs& in,
                                       const std::vector<LayerResult>& results,
                                       const std::vector<Tag>& eval_tags) {
  require_dims(results.size() == in.layers.size(), "one result per layer");
  std::vector<LayerStats> out;
  Matrix x_fp = in.inputs;
  Matrix x_q = in.inputs;
  for (std::size_t l = 0; l < in.layers.size(); ++l) {
    const Matrix& w = in.layers[l];
    const Matrix w_hat = results[l].dequantized();
    const TaggedActivations batch{x_fp, x_q, eval_tags};
    const GroupedMoments m = accumulate_moments(batch);
    const GroupLosses gl = group_losses(w - w_hat, m);
    const OutputLosses ol = output_losses(w, w_hat, batch);
    LayerStats s;
    const double mass = m.h_common.trace() + m.h_tail.trace();
    s.rare_mass_share = mass > 0.0 ? rare_mass_share(m) : 0.0;
    s.lambda = results[l].metric.lambda;
    s.alpha = results[l].residual.alpha;
    s.common_loss = gl.common;
    s.tail_loss = gl.tail;
    s.weighted_loss = results[l].losses.weighted;
    s.output_common_loss = ol.common;
    s.output_tail_loss = ol.tail;
    out.push_back(s);
    if (l + 1 < in.layers.size()) {
      x_fp = advance_stream(x_fp, w, true);
      x_q = advance_stream(x_q, w_hat, true);
    }
  }
  return out;
}

double RunReport::mean_common() const {
  if (trial_common.empty()) return 0.0;
  return std::accumulate(trial_common.begin(), trial_common.end(), 0.0) /
         static_cast<double>(trial_common.size());
}

double RunReport::mean_tail() const {
  if (trial_tail.empty()) return 0.0;
  return std::accumulate(trial_tail.begin(), trial_tail.end(), 0.0) /
         static_cast<double>(trial_tail.size());
}

std::vector<std::pair<std::string, std::string>> config_echo(const SyntheticSpec& spec,
                                                             const ExperimentParams& params) {
  const TarqConfig& c = params.tarq;
  std::string dims;
  for (std::size_t k = 0; k < spec.layer_dims.size(); ++k) {
    if (k) dims += ",";
    dims += std::to_string(spec.layer_dims[k]);
  }
  return {
      {"bits", std::to_string(c.sweep.quant.bits)},
      {"group_size", std::to_string(c.sweep.quant.group_size)},
      {"scale_mode", c.sweep.quant.scale_mode == ScaleMode::kMinMax ? "minmax" : "absmax"},
      {"percdamp", format_number(c.sweep.percdamp)},
      {"delta", format_number(c.delta)},
      {"cost_ratio_c", format_number(c.cost_ratio_c)},
      {"eps_rel", format_number(c.eps_rel)},
      {"alpha_eps_rel", format_number(c.alpha_eps_rel)},
      {"outlier_fraction", format_number(c.gate.outlier_fraction)},
      {"tau", format_number(c.gate.gate_threshold)},
      {"zipf_calib_k", format_number(params.calib_threshold)},
      {"zipf_eval_k", format_number(params.eval_threshold)},
      {"trials", std::to_string(params.trials)},
      {"layer_dims", dims},
      {"positions", std::to_string(spec.positions)},
      {"tail_share", format_number(spec.tail_share)},
      {"common_decay", format_number(spec.common_decay)},
      {"tail_decay", format_number(spec.tail_decay)},
      {"tail_scale", format_number(spec.tail_scale)},
      {"tail_rotation_deg", format_number(spec.tail_rotation_deg)},
      {"seed", std::to_string(spec.seed)},
      {"loss_proxy", "reconstruction"},
  };
}

RunReport run_method(const SyntheticSpec& spec, Variant method, const ExperimentParams& params,
                     std::string cell) {
  spec.validate();
  const std::size_t trials = params.trials;
  std::vector<std::vector<LayerStats>> per_trial(trials);
  std::vector<std::exception_ptr> failures(trials);

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t kk = 0; kk < static_cast<std::ptrdiff_t>(trials); ++kk) {
    const auto k = static_cast<std::size_t>(kk);
    try {
      SyntheticSpec trial_spec = spec;
      trial_spec.seed = Rng::derive(spec.seed, k);
      const SyntheticBatch batch = generate_batch(trial_spec);
      const SweepInputs in{batch.layers, batch.inputs, tags_at(batch.zipf, params.calib_threshold)};
      TarqConfig cfg = params.tarq;
      cfg.seed = Rng::derive(trial_spec.seed, kNoiseStream);
      const auto results = sequential_sweep(in, cfg, method);
      per_trial[k] = evaluate_chain(in, results, tags_at(batch.zipf, params.eval_threshold));
    } catch (...) {
      failures[k] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  RunReport r;
  r.method = std::string(variant_name(method));
  r.cell = std::move(cell);
  r.trials = trials;
  r.config = config_echo(spec, params);
  const std::size_t layers = spec.layer_dims.size() - 1;
  r.per_layer.assign(layers, LayerStats{});
  for (const auto& trial : per_trial) {
    double common = 0.0, tail = 0.0;
    for (std::size_t l = 0; l < layers; ++l) {
      add_stats(r.per_layer[l], trial[l]);
      common += trial[l].common_loss;
      tail += trial[l].tail_loss;
    }
    r.trial_common.push_back(common);
    r.trial_tail.push_back(tail);
  }
  if (trials > 0)
    for (auto& s : r.per_layer) scale_stats(s, 1.0 / static_cast<double>(trials));
  return r;
}

std::vector<RunReport> run_experiment(const SyntheticSpec& spec,
                                      const std::vector<Variant>& methods,
                                      const ExperimentParams& params) {
  std::vector<RunReport> out;
  for (Variant v : methods) out.push_back(run_method(spec, v, params));
  return out;
}

std::optional<GridKind> parse_grid(std::string_view name) {
  if (name == "variants") return GridKind::kVariants;
  if (name == "c") return GridKind::kCostRatio;
  if (name == "k") return GridKind::kZipf;
  if (name == "source") return GridKind::kSource;
  if (name == "spqr") return GridKind::kSpqr;
  return std::nullopt;
}

std::string_view grid_name(GridKind kind) {
  switch (kind) {
    case GridKind::kVariants: return "variants";
    case GridKind::kCostRatio: return "c";
    case GridKind::kZipf: return "k";
    case GridKind::kSource: return "source";
    case GridKind::kSpqr: return "spqr";
  }
  return "unknown";
}

std::vector<RunReport> run_grid(GridKind kind, const SyntheticSpec& spec,
                                const ExperimentParams& params) {
  std::vector<RunReport> out;
  auto run_list = [&](std::initializer_list<Variant> vs) {
    for (Variant v : vs) out.push_back(run_method(spec, v, params, std::string(variant_name(v))));
  };
  switch (kind) {
    case GridKind::kVariants:
      run_list({Variant::kGptq, Variant::kRarebalOnly, Variant::kResidualOnly, Variant::kTarq});
      break;
    case GridKind::kSource: {
      const std::pair<Variant, const char*> cells[] = {
          {Variant::kTarq, "rB"}, {Variant::kNoiseBal, "nB"}, {Variant::kCommonBal, "cB"}};
      for (const auto& [v, label] : cells) out.push_back(run_method(spec, v, params, label));
      break;
    }
    case GridKind::kSpqr:
      run_list({Variant::kSpqr, Variant::kSpqrTarq, Variant::kSpqrTarqGated});
      break;
    case GridKind::kCostRatio:
      for (double c : {0.25, 0.5, 1.0, 2.0, 4.0}) {
        ExperimentParams p = params;
        p.tarq.cost_ratio_c = c;
        out.push_back(run_method(spec, Variant::kTarq, p, "c=" + format_number(c)));
      }
      break;
    case GridKind::kZipf:
      for (double kc : {2.0, 3.0, 4.0}) {
        for (double ke : {2.0, 3.0, 4.0}) {
          ExperimentParams p = params;
          p.calib_threshold = kc;
          p.eval_threshold = ke;
          out.push_back(run_method(spec, Variant::kTarq, p,
                                   "k_c=" + format_number(kc) + ",k_e=" + format_number(ke)));
        }
      }
      break;
  }
  return out;
}

SyntheticSpec benchmark_spec() {
  SyntheticSpec spec;
  spec.layer_dims = {16, 16, 16, 16};
  spec.positions = 512;
  spec.tail_share = 0.07;
  spec.common_decay = 0.9;
  spec.tail_decay = 0.3;
  spec.tail_rotation_deg = 90.0;
  spec.seed = 1;
  return spec;
}

ExperimentParams benchmark_params(std::size_t trials) {
  ExperimentParams p;
  p.trials = trials;
  p.tarq.sweep.quant.bits = 4;
  p.tarq.sweep.quant.group_size = 8;
  return p;
}

double paired_win_fraction(const RunReport& a, const RunReport& b) {
  require_dims(a.trial_tail.size() == b.trial_tail.size() && !a.trial_tail.empty(),
               "paired reports need the same trial count");
  std::size_t wins = 0;
  for (std::size_t k = 0; k < a.trial_tail.size(); ++k)
    if (a.trial_tail[k] <= b.trial_tail[k]) ++wins;
  return static_cast<double>(wins) / static_cast<double>(a.trial_tail.size());
}

}  // namespace tarq
