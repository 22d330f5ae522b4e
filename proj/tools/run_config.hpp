#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "levyshell/integrator.hpp"
#include "levyshell/levy.hpp"
#include "levyshell/shell.hpp"

namespace levyshell::cli {

enum class Command { Simulate, BelCheck, Ergodicity, NoiseCheck, Refine };

const char* to_string(Command c);
std::optional<Command> parse_command(const std::string& name);

// Every problem found in a config, reported together.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

private:
  std::vector<std::string> violations_;
};

struct NoiseBlock {
  LevyFamily family = LevyFamily::TemperedStable;
  TemperedStableParams ts;
  VarianceGammaParams vg;
  double delta_cut = 1e-3;

  LevyMeasureSpec spec() const;
};

struct RunConfig {
  Command command = Command::Simulate;
  ModelParams model;
  NoiseBlock noise;
  SdePathConfig integrator;  // seed and delta_cut are copied in from the top level
  nlohmann::json experiment; // resolved experiment block, every default filled in
  std::uint64_t seed = 0;
  std::string output_dir = "levyshell-out";
  unsigned workers = 0;      // resolved to the hardware count when 0

  ShellModel build_model() const { return ShellModel(model); }
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
  std::optional<unsigned> workers;
};

// Parses and validates. Precedence for output_dir: --out, then
// LEVYSHELL_OUTPUT_DIR, then the config file. Throws ConfigError listing
// every violation.
RunConfig resolve_config(Command command, const nlohmann::json& doc, const Overrides& overrides);
RunConfig load_config(Command command, const std::string& path, const Overrides& overrides);

// Full resolved config plus the random-stream layout; enough to rerun.
nlohmann::json manifest(const RunConfig& config);

// Shell state from [[re, im], ...]; a single pair is broadcast to every shell.
ShellState state_from_json(const nlohmann::json& j, int shells);
nlohmann::json state_to_json(const ShellState& u);

}  // namespace levyshell::cli
