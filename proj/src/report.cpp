#include "tarq/report.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tarq {

std::string format_number(double v) {
  char buf[64];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string format_report(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw Error(ErrorCode::kEmptyReport, "no runs to report");
  std::ostringstream out;
  out << "# tarq report v1\n";
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const RunReport& rep = reports[r];
    if (rep.per_layer.empty()) {
      throw Error(ErrorCode::kEmptyReport, "run '" + rep.method + "' has no layers");
    }
    out << "\n[run " << r << "]\n";
    out << "method = " << rep.method << "\n";
    out << "cell = " << rep.cell << "\n";
    out << "trials = " << rep.trials << "\n";
    for (const auto& [k, v] : rep.config) out << "config." << k << " = " << v << "\n";
    out << "mean_common_loss = " << format_number(rep.mean_common()) << "\n";
    out << "mean_tail_loss = " << format_number(rep.mean_tail()) << "\n";
    for (std::size_t l = 0; l < rep.per_layer.size(); ++l) {
      const LayerStats& s = rep.per_layer[l];
      out << "\n[record " << r << "." << l << "]\n";
      out << "method = " << rep.method << "\n";
      out << "layer = " << l << "\n";
      out << "rare_mass_share = " << format_number(s.rare_mass_share) << "\n";
      out << "lambda = " << format_number(s.lambda) << "\n";
      out << "alpha = " << format_number(s.alpha) << "\n";
      out << "common_loss = " << format_number(s.common_loss) << "\n";
      out << "tail_loss = " << format_number(s.tail_loss) << "\n";
      out << "weighted_loss = " << format_number(s.weighted_loss) << "\n";
      out << "output_common_loss = " << format_number(s.output_common_loss) << "\n";
      out << "output_tail_loss = " << format_number(s.output_tail_loss) << "\n";
    }
  }
  return out.str();
}

void emit_report(const std::vector<RunReport>& reports, const std::string& path) {
  const std::string text = format_report(reports);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path);
}

}  // namespace tarq
