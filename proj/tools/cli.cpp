#include "cli.hpp"

#include <ostream>

#include <CLI11.hpp>

#include "experiments.hpp"
#include "levyshell/errors.hpp"
#include "run_config.hpp"

namespace levyshell::cli {

namespace {

int report(std::ostream& err, int code, const std::string& kind, const std::string& message,
           const std::vector<std::string>& violations = {}) {
  nlohmann::json j;
  j["error"] = {{"exit_code", code}, {"kind", kind}, {"message", message}};
  if (!violations.empty()) j["error"]["violations"] = violations;
  err << j.dump() << '\n';
  return code;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain:
    case ErrorKind::Parameter:
    case ErrorKind::Shape: return kExitConfig;
    case ErrorKind::Resource:
    case ErrorKind::BlowUp: return kExitRuntime;
    case ErrorKind::Infeasible:
    case ErrorKind::Undetermined: return kExitInconclusive;
  }
  return kExitRuntime;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shell models driven by pure-jump Levy noise: simulation and diagnostics", "levyshell"};
  app.require_subcommand(1, 1);
  std::string config_path;
  Overrides overrides;
  std::uint64_t seed = 0;
  std::string out_dir;
  unsigned workers = 0;

  const std::vector<std::pair<Command, const char*>> commands = {
      {Command::Simulate, "Integrate one trajectory, optionally with a moment ensemble"},
      {Command::BelCheck, "Compare the BEL gradient estimator with finite differences"},
      {Command::Ergodicity, "KS convergence of two ensembles, moments, decay and accessibility"},
      {Command::NoiseCheck, "Small-deviation verdict and moment tables of the Levy measure"},
      {Command::Refine, "Galerkin refinement errors along one noise path"},
  };
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts, out_opts, worker_opts;
  for (const auto& [cmd, help] : commands) {
    CLI::App* sub = app.add_subcommand(to_string(cmd), help);
    sub->add_option("--config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
    seed_opts.push_back(sub->add_option("--seed", seed, "Master seed, overrides the config"));
    out_opts.push_back(sub->add_option("--out", out_dir, "Output directory, overrides the config"));
    worker_opts.push_back(sub->add_option("--workers", workers, "Worker threads (0 = all cores)"));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << app.help();
    return report(err, kExitUsage, "usage", e.what());
  }

  std::size_t which = 0;
  while (!subs[which]->parsed()) ++which;
  const Command command = commands[which].first;
  if (seed_opts[which]->count()) overrides.seed = seed;
  if (out_opts[which]->count()) overrides.output_dir = out_dir;
  if (worker_opts[which]->count()) overrides.workers = workers;

  try {
    const RunConfig config = load_config(command, config_path, overrides);
    run_experiment(config, out);
  } catch (const ConfigError& e) {
    return report(err, kExitConfig, "config", "invalid config", e.violations());
  } catch (const Error& e) {
    return report(err, exit_code(e.kind()), to_string(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return report(err, kExitRuntime, "Resource", "out of memory");
  } catch (const std::exception& e) {
    return report(err, kExitRuntime, "runtime", e.what());
  }
  return kExitOk;
}

}  // namespace levyshell::cli
