#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "tarq/harness.hpp"

namespace tarq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitParse = 2;
inline constexpr int kExitNumeric = 3;

// Fully resolved run configuration shared by every subcommand.
struct RunConfig {
  int bits = 4;
  std::size_t group_size = 128;
  std::string scale_mode = "minmax";
  double percdamp = 0.01;
  double delta = 0.01;
  double cost_ratio_c = 1.0;
  double zipf_calib_k = 3.0;
  double zipf_eval_k = 3.0;
  double eps_rel = 1e-8;
  std::string variant = "tarq";
  double outlier_fraction = 0.01;
  double tau = 3.0;
  bool rarity_gate_outliers = false;
  std::uint64_t seed = 0;

  // Throws BadSpec on out-of-range values.
  TarqConfig tarq_config() const;
  Variant resolved_variant() const;
};

// Entry point used by the `tarq` binary; `args` excludes the program name.
// stdout receives one summary line per layer, stderr diagnostics only.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tarq::cli
