#pragma once

#include <iosfwd>
#include <string>

#include "run_config.hpp"

namespace levyshell::cli {

// Runs the configured experiment and writes manifest.json, the result files
// and summary.txt into config.output_dir. The summary is also written to
// `out`. Statistics flagged unreliable are written first and then reported
// as an Undetermined error.
void run_experiment(const RunConfig& config, std::ostream& out);

// CSV number formatting shared by every result file: "%.17g".
std::string csv_number(double v);

}  // namespace levyshell::cli
