#pragma once

#include <string>
#include <vector>

#include "tarq/harness.hpp"

namespace tarq {

// Plain-text report; see docs/REPORT.md. Throws EmptyReport when there are no
// reports or a report has no layers.
std::string format_report(const std::vector<RunReport>& reports);

void emit_report(const std::vector<RunReport>& reports, const std::string& path);

// Shortest round-trip decimal form used for every number in a report.
std::string format_number(double v);

}  // namespace tarq
