#include "tarq/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "tarq/lexicon.hpp"
#include "tarq/report.hpp"
#include "tarq/tensor_io.hpp"

namespace tarq::cli {
namespace {

void add_quant_flags(CLI::App* cmd, RunConfig& cfg) {
  cmd->add_option("--bits", cfg.bits, "Weight bit-width")->check(CLI::Range(2, 8));
  cmd->add_option("--group-size", cfg.group_size, "Input channels per scale group")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--scale-mode", cfg.scale_mode, "Group scale rule")
      ->check(CLI::IsMember({"minmax", "absmax"}));
  cmd->add_option("--percdamp", cfg.percdamp, "GPTQ damping, times mean(diag(H))")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--delta", cfg.delta, "Residual damping, times mean(diag(H_rB))")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--cost-ratio", cfg.cost_ratio_c, "Multiplier on the trace-equalizing lambda")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--eps-rel", cfg.eps_rel, "Lambda epsilon, times tr(H_common)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--zipf-calib-k", cfg.zipf_calib_k, "Zipf threshold for calibration tags");
  cmd->add_option("--zipf-eval-k", cfg.zipf_eval_k, "Zipf threshold for scored tail");
  cmd->add_option("--outlier-fraction", cfg.outlier_fraction, "Share of columns kept exact")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--tau", cfg.tau, "Gate threshold in units of mean |x|")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--rarity-gate-outliers", cfg.rarity_gate_outliers,
                "Gate rarity weights on positions covered by outlier columns");
  cmd->add_option("--seed", cfg.seed, "Seed for every random draw");
}

struct SynthFlags {
  std::vector<std::size_t> dims{16, 16, 16, 16};
  std::size_t positions = 512;
  double tail_share = 0.07;
  double common_decay = 0.9;
  double tail_decay = 0.3;
  double tail_scale = 1.0;
  double rotation = 90.0;

  SyntheticSpec spec(std::uint64_t seed) const {
    SyntheticSpec s;
    s.layer_dims = dims;
    s.positions = positions;
    s.tail_share = tail_share;
    s.common_decay = common_decay;
    s.tail_decay = tail_decay;
    s.tail_scale = tail_scale;
    s.tail_rotation_deg = rotation;
    s.seed = seed;
    return s;
  }
};

void add_synth_flags(CLI::App* cmd, SynthFlags& f) {
  cmd->add_option("--dims", f.dims, "Layer widths n0,n1,...,nL")->delimiter(',');
  cmd->add_option("--positions", f.positions, "Calibration positions");
  cmd->add_option("--tail-share", f.tail_share, "Share of tail positions");
  cmd->add_option("--common-decay", f.common_decay, "Common covariance eigen-decay");
  cmd->add_option("--tail-decay", f.tail_decay, "Tail covariance eigen-decay");
  cmd->add_option("--tail-scale", f.tail_scale, "Tail covariance scale");
  cmd->add_option("--tail-rotation", f.rotation, "Tail basis rotation in degrees");
}

std::string layer_path(const std::string& dir, std::size_t l) {
  return (std::filesystem::path(dir) / ("layer_" + std::to_string(l) + ".tqt")).string();
}

int cmd_synth(const RunConfig& cfg, const SynthFlags& flags, const std::string& model_path,
              const std::string& calib_path, std::ostream& out) {
  const SyntheticBatch b = generate_batch(flags.spec(cfg.seed));
  io::TensorFile model;
  for (const auto& w : b.layers) model.sections.push_back(io::encode_fp_tensor(io::to_fp_tensor(w)));
  io::write_file(model_path, model);
  io::TensorFile calib;
  calib.sections.push_back(io::encode_fp_tensor(io::to_fp_tensor(b.inputs)));
  io::FpTensor scores;
  scores.dims = {b.zipf.size()};
  for (double z : b.zipf) scores.data.push_back(static_cast<float>(z));
  calib.sections.push_back(io::encode_fp_tensor(scores));
  io::write_file(calib_path, calib);
  out << "synth layers=" << b.layers.size() << " positions=" << b.tags.size()
      << " tail=" << std::count(b.tags.begin(), b.tags.end(), Tag::kTail) << "\n";
  return kExitOk;
}

std::vector<double> zipf_from(const io::FpTensor& t) {
  std::vector<double> z;
  z.reserve(t.data.size());
  for (float v : t.data) z.push_back(std::isnan(v) ? -std::numeric_limits<double>::infinity() : v);
  return z;
}

int cmd_quantize(const RunConfig& cfg, const std::string& model_path,
                 const std::string& calib_path, const std::string& out_dir,
                 const std::string& report_path, std::ostream& out) {
  const TarqConfig tcfg = cfg.tarq_config();
  const Variant variant = cfg.resolved_variant();

  const io::TensorFile model = io::read_file(model_path);
  const io::TensorFile calib = io::read_file(calib_path);
  if (model.sections.empty()) throw Error(ErrorCode::kParseError, "model file has no tensors");
  if (calib.sections.size() != 2) {
    throw Error(ErrorCode::kParseError, "calibration file needs inputs and Zipf scores");
  }
  SweepInputs in;
  for (const auto& s : model.sections) {
    const io::FpTensor t = io::decode_fp_tensor(s);
    if (t.dims.size() != 2) throw Error(ErrorCode::kParseError, "layer tensors must be 2-D");
    in.layers.push_back(io::to_matrix(t));
  }
  const io::FpTensor inputs = io::decode_fp_tensor(calib.sections[0]);
  if (inputs.dims.size() != 2) throw Error(ErrorCode::kParseError, "calibration inputs must be 2-D");
  in.inputs = io::to_matrix(inputs);
  const std::vector<double> zipf = zipf_from(io::decode_fp_tensor(calib.sections[1]));
  if (zipf.size() != in.inputs.rows()) {
    throw Error(ErrorCode::kParseError, "Zipf score count != calibration positions");
  }
  in.tags = tags_at(zipf, cfg.zipf_calib_k);

  const std::vector<LayerResult> results = sequential_sweep(in, tcfg, variant);
  const std::vector<LayerStats> stats = evaluate_chain(in, results, tags_at(zipf, cfg.zipf_eval_k));

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  for (std::size_t l = 0; l < results.size(); ++l) {
    io::TensorFile f;
    f.sections.push_back(io::encode_packed(results[l].quantized.quantized));
    if (!results[l].quantized.kept.empty()) {
      f.sections.push_back(io::encode_fp_columns(results[l].quantized.kept));
    }
    io::write_file(layer_path(out_dir.empty() ? "." : out_dir, l), f);
    const LayerStats& s = stats[l];
    out << "layer " << l << " variant=" << variant_name(variant)
        << " lambda=" << format_number(s.lambda) << " alpha=" << format_number(s.alpha)
        << " common_loss=" << format_number(s.common_loss)
        << " tail_loss=" << format_number(s.tail_loss)
        << " rare_mass_share=" << format_number(s.rare_mass_share) << "\n";
  }

  if (!report_path.empty()) {
    RunReport rep;
    rep.method = std::string(variant_name(variant));
    rep.cell = "-";
    rep.trials = 1;
    ExperimentParams p;
    p.tarq = tcfg;
    p.trials = 1;
    p.calib_threshold = cfg.zipf_calib_k;
    p.eval_threshold = cfg.zipf_eval_k;
    rep.config = {
        {"model", model_path},
        {"calib", calib_path},
        {"variant", std::string(variant_name(variant))},
        {"rarity_gate_outliers", cfg.rarity_gate_outliers ? "true" : "false"},
        {"seed", std::to_string(cfg.seed)},
    };
    for (auto& kv : config_echo(SyntheticSpec{}, p)) {
      static const std::vector<std::string> keep = {
          "bits", "group_size", "scale_mode", "percdamp", "delta", "cost_ratio_c", "eps_rel",
          "alpha_eps_rel", "outlier_fraction", "tau", "zipf_calib_k", "zipf_eval_k"};
      if (std::find(keep.begin(), keep.end(), kv.first) != keep.end()) rep.config.push_back(kv);
    }
    rep.per_layer = stats;
    double c = 0.0, t = 0.0;
    for (const auto& s : stats) {
      c += s.common_loss;
      t += s.tail_loss;
    }
    rep.trial_common = {c};
    rep.trial_tail = {t};
    emit_report({rep}, report_path);
  }
  return kExitOk;
}

int cmd_pool(const RunConfig& cfg, const std::string& kind_name,
             const std::vector<std::string>& corpora, const std::string& freq_path,
             std::size_t n, const std::string& out_path, std::ostream& out) {
  const auto kind = parse_pool_kind(kind_name);
  if (!kind) throw Error(ErrorCode::kParseError, "unknown pool kind " + kind_name);
  const FreqTable table = FreqTable::load(freq_path);
  std::vector<Corpus> sources;
  for (const auto& p : corpora) sources.push_back(load_corpus(p));
  const Pool pool = build_pool(sources, *kind, n, cfg.seed, table, cfg.zipf_calib_k);

  std::ostringstream text;
  text << "# pool kind=" << pool_kind_name(*kind) << " n=" << n
       << " sources=" << sources.size() << " staged_per_source=" << pool.staged_per_source
       << " candidates=" << pool.staged_per_source * sources.size()
       << " zipf_k=" << format_number(cfg.zipf_calib_k) << " seed=" << cfg.seed << "\n";
  for (const auto& e : pool.entries) {
    text << e.utterance->id << "\n";
  }
  if (out_path.empty() || out_path == "-") {
    out << text.str();
  } else {
    std::ofstream f(out_path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::kIoError, "cannot write " + out_path);
    f << text.str();
    out << "pool " << pool_kind_name(*kind) << " selected=" << pool.entries.size()
        << " staged_per_source=" << pool.staged_per_source << "\n";
  }
  return kExitOk;
}

ExperimentParams experiment_params(const RunConfig& cfg, std::size_t trials) {
  ExperimentParams p;
  p.tarq = cfg.tarq_config();
  p.trials = trials;
  p.calib_threshold = cfg.zipf_calib_k;
  p.eval_threshold = cfg.zipf_eval_k;
  return p;
}

void summarize(const std::vector<RunReport>& reports, std::ostream& out) {
  for (const auto& r : reports) {
    out << r.method << " cell=" << r.cell << " mean_common_loss=" << format_number(r.mean_common())
        << " mean_tail_loss=" << format_number(r.mean_tail()) << "\n";
  }
}

int cmd_ablate(const RunConfig& cfg, const SynthFlags& flags, const std::string& grid,
               std::size_t trials, const std::string& out_path, std::ostream& out) {
  const auto kind = parse_grid(grid);
  if (!kind) throw Error(ErrorCode::kParseError, "unknown grid " + grid);
  const auto reports = run_grid(*kind, flags.spec(cfg.seed), experiment_params(cfg, trials));
  emit_report(reports, out_path);
  summarize(reports, out);
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, const SynthFlags& flags,
               const std::vector<std::string>& methods, std::size_t trials,
               const std::string& out_path, std::ostream& out) {
  std::vector<Variant> vs;
  for (const auto& m : methods) {
    const auto v = parse_variant(m);
    if (!v) throw Error(ErrorCode::kParseError, "unknown method " + m);
    vs.push_back(*v);
  }
  const auto reports = run_experiment(flags.spec(cfg.seed), vs, experiment_params(cfg, trials));
  emit_report(reports, out_path);
  summarize(reports, out);
  return kExitOk;
}

}  // namespace

TarqConfig RunConfig::tarq_config() const {
  TarqConfig t;
  t.sweep.quant.bits = bits;
  t.sweep.quant.group_size = group_size;
  t.sweep.quant.scale_mode = scale_mode == "absmax" ? ScaleMode::kAbsMax : ScaleMode::kMinMax;
  t.sweep.quant.validate();
  t.sweep.percdamp = percdamp;
  t.delta = delta;
  t.cost_ratio_c = cost_ratio_c;
  t.eps_rel = eps_rel;
  t.gate.outlier_fraction = outlier_fraction;
  t.gate.gate_threshold = tau;
  t.seed = seed;
  if (!(cost_ratio_c > 0.0)) throw Error(ErrorCode::kBadSpec, "cost ratio must be positive");
  if (!(outlier_fraction > 0.0)) throw Error(ErrorCode::kBadSpec, "outlier fraction must be > 0");
  return t;
}

Variant RunConfig::resolved_variant() const {
  const auto v = parse_variant(variant);
  if (!v) throw Error(ErrorCode::kBadSpec, "unknown variant " + variant);
  if (rarity_gate_outliers && *v == Variant::kSpqrTarq) return Variant::kSpqrTarqGated;
  return *v;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tail-aware post-training weight quantization"};
  app.require_subcommand(1);
  RunConfig cfg;
  SynthFlags synth_flags;

  std::string model_path, calib_path, out_dir, report_path, out_path, freq_path, kind, grid;
  std::vector<std::string> corpora, methods{"gptq", "rarebal_only", "residual_only", "tarq"};
  std::size_t pool_n = 128;
  std::size_t trials = 20;

  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic model and calibration set");
  add_quant_flags(synth, cfg);
  add_synth_flags(synth, synth_flags);
  synth->add_option("--out-model", model_path)->required();
  synth->add_option("--out-calib", calib_path)->required();

  auto* quantize = app.add_subcommand("quantize", "Quantize a layer chain");
  add_quant_flags(quantize, cfg);
  quantize->add_option("--variant", cfg.variant, "gptq|rarebal_only|residual_only|tarq|nB|cB|"
                                                 "spqr|spqr_tarq|spqr_tarq_gated");
  quantize->add_option("--model", model_path, "TQT1 file of 2-D layer weights")->required();
  quantize->add_option("--calib", calib_path, "TQT1 file: inputs N x n0, Zipf scores [N]")
      ->required();
  quantize->add_option("--out-dir", out_dir, "Directory for layer_<l>.tqt");
  quantize->add_option("--out,--report", report_path, "Report path");

  auto* pool = app.add_subcommand("pool", "Build a rare-biased calibration pool");
  add_quant_flags(pool, cfg);
  pool->add_option("--kind", kind, "r_top|r_mix|r_cross")->required();
  pool->add_option("--corpus", corpora, "Corpus manifest (id<TAB>text); repeat per source")
      ->required();
  pool->add_option("--freq", freq_path, "Frequency table (word<TAB>count)")->required();
  pool->add_option("-n,--size", pool_n, "Pool size N");
  pool->add_option("--out", out_path, "Manifest path, '-' for stdout");

  auto* ablate = app.add_subcommand("ablate", "Run an ablation grid on the synthetic benchmark");
  add_quant_flags(ablate, cfg);
  add_synth_flags(ablate, synth_flags);
  ablate->add_option("--grid", grid, "variants|c|k|source|spqr")->required();
  ablate->add_option("--trials", trials, "Seeded trials per cell");
  ablate->add_option("--out", out_path, "Report path")->required();

  auto* report = app.add_subcommand("report", "Run methods on the synthetic benchmark");
  add_quant_flags(report, cfg);
  add_synth_flags(report, synth_flags);
  report->add_option("--methods", methods, "Comma-separated variants")->delimiter(',');
  report->add_option("--trials", trials, "Seeded trials");
  report->add_option("--out", out_path, "Report path")->required();

  std::vector<std::string> argv_store;
  argv_store.push_back("tarq");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitParse;
  }

  try {
    if (*synth) return cmd_synth(cfg, synth_flags, model_path, calib_path, out);
    if (*quantize) return cmd_quantize(cfg, model_path, calib_path, out_dir, report_path, out);
    if (*pool) return cmd_pool(cfg, kind, corpora, freq_path, pool_n, out_path, out);
    if (*ablate) return cmd_ablate(cfg, synth_flags, grid, trials, out_path, out);
    if (*report) return cmd_report(cfg, synth_flags, methods, trials, out_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kSingularMetric ? kExitNumeric : kExitParse;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace tarq::cli
