#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tarq/pipeline.hpp"

namespace tarq {

// Two-group Gaussian calibration model feeding a chain of random linear layers.
// Common positions are drawn from Q diag(common_decay^k) Q^T. Tail positions use
// the same basis after a rotation by tail_rotation_deg in the planes (k, n-1-k),
// so at 90 degrees the tail energy sits where the common energy is weakest.
struct SyntheticSpec {
  std::vector<std::size_t> layer_dims{16, 16, 16, 16};  // widths n0..nL, L layers
  std::size_t positions = 512;
  double tail_share = 0.07;
  double common_decay = 0.9;
  double tail_decay = 0.3;
  double tail_scale = 1.0;
  double tail_rotation_deg = 90.0;
  std::uint64_t seed = 0;

  // Throws BadSpec.
  void validate() const;
  std::size_t tail_positions() const;
};

Matrix common_covariance(const SyntheticSpec& spec);
Matrix tail_covariance(const SyntheticSpec& spec);

struct SyntheticBatch {
  std::vector<Matrix> layers;
  Matrix inputs;                  // N x n0
  std::vector<Tag> tags;          // tail iff drawn from the tail covariance
  std::vector<double> zipf;       // tail in [1.5, 3), common in [3, 7)
};

SyntheticBatch generate_batch(const SyntheticSpec& spec);

// Tail iff score < threshold.
std::vector<Tag> tags_at(const std::vector<double>& zipf, double threshold);

struct LayerStats {
  double rare_mass_share = 0.0;
  double lambda = 0.0;
  double alpha = 0.0;
  double common_loss = 0.0;
  double tail_loss = 0.0;
  double weighted_loss = 0.0;
  double output_common_loss = 0.0;
  double output_tail_loss = 0.0;
};

// Replays both streams through the original and quantized layers and scores
// each layer under `eval_tags`. Moments and output errors are taken exactly as
// the sweep takes them, so with eval_tags equal to the calibration tags the
// group losses match the LayerResult values.
std::vector<LayerStats> evaluate_chain(const SweepInputs& in,
                                       const std::vector<LayerResult>& results,
                                       const std::vector<Tag>& eval_tags);

struct ExperimentParams {
  TarqConfig tarq;
  std::size_t trials = 200;
  double calib_threshold = 3.0;  // Zipf threshold defining calibration tags (k_c)
  double eval_threshold = 3.0;   // Zipf threshold defining the scored tail (k_e)
};

struct RunReport {
  std::string method;
  std::string cell;  // grid cell label, "-" outside a grid
  std::size_t trials = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<LayerStats> per_layer;  // trial means
  // Per-trial totals over layers, in trial order, for paired comparisons.
  std::vector<double> trial_common;
  std::vector<double> trial_tail;

  double mean_common() const;
  double mean_tail() const;
};

std::vector<std::pair<std::string, std::string>> config_echo(const SyntheticSpec& spec,
                                                             const ExperimentParams& params);

// One method over params.trials seeded trials (trial k uses seed derive(spec.seed, k)).
RunReport run_method(const SyntheticSpec& spec, Variant method, const ExperimentParams& params,
                     std::string cell = "-");

std::vector<RunReport> run_experiment(const SyntheticSpec& spec,
                                      const std::vector<Variant>& methods,
                                      const ExperimentParams& params);

enum class GridKind {
  kVariants,  // gptq, rarebal_only, residual_only, tarq
  kCostRatio,  // tarq at c in {0.25, 0.5, 1, 2, 4}
  kZipf,       // tarq at (k_c, k_e) in {2,3,4}^2, row-major over k_c
  kSource,     // rB, nB, cB
  kSpqr,       // spqr, spqr_tarq, spqr_tarq_gated
};

std::optional<GridKind> parse_grid(std::string_view name);
std::string_view grid_name(GridKind kind);

std::vector<RunReport> run_grid(GridKind kind, const SyntheticSpec& spec,
                                const ExperimentParams& params);

// The seeded two-group benchmark: three 16-wide layers, 512 positions, p = 0.07,
// W4 with groups of 8, seed 1.
SyntheticSpec benchmark_spec();
ExperimentParams benchmark_params(std::size_t trials = 200);

// Fraction of trials where a's tail total is at most b's.
double paired_win_fraction(const RunReport& a, const RunReport& b);

}  // namespace tarq
