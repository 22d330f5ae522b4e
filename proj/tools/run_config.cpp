#include "run_config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "levyshell/parallel.hpp"
#include "levyshell/rng.hpp"

namespace levyshell::cli {

using nlohmann::json;

const char* to_string(Command c) {
  switch (c) {
    case Command::Simulate: return "simulate";
    case Command::BelCheck: return "bel-check";
    case Command::Ergodicity: return "ergodicity";
    case Command::NoiseCheck: return "noise-check";
    case Command::Refine: return "refine";
  }
  return "?";
}

std::optional<Command> parse_command(const std::string& name) {
  for (Command c : {Command::Simulate, Command::BelCheck, Command::Ergodicity, Command::NoiseCheck, Command::Refine})
    if (name == to_string(c)) return c;
  return std::nullopt;
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "; " : "") << v[i];
  return os.str();
}

const char* type_name(const json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  return "object";
}

// Reads one JSON object against a fixed key set; wrong types and unknown keys
// become violations instead of exceptions.
class BlockReader {
public:
  BlockReader(const json& doc, std::string name, std::vector<std::string>& errors)
      : name_(std::move(name)), errors_(errors) {
    if (doc.is_null()) return;
    if (!doc.is_object()) {
      errors_.push_back(name_ + ": expected an object, got " + type_name(doc));
      return;
    }
    obj_ = doc;
  }

  double number(const std::string& key, double fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    const json& v = obj_[key];
    if (!v.is_number()) {
      bad_type(key, "number", v);
      return fallback;
    }
    return v.get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    seen_.insert(key);
    if (!obj_.contains(key) || obj_[key].is_null()) return std::nullopt;
    if (!obj_[key].is_number()) {
      bad_type(key, "number or null", obj_[key]);
      return std::nullopt;
    }
    return obj_[key].get<double>();
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    const json& v = obj_[key];
    if (!v.is_number_integer()) {
      bad_type(key, "integer", v);
      return fallback;
    }
    return v.get<std::int64_t>();
  }

  bool boolean(const std::string& key, bool fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    if (!obj_[key].is_boolean()) {
      bad_type(key, "boolean", obj_[key]);
      return fallback;
    }
    return obj_[key].get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    if (!obj_[key].is_string()) {
      bad_type(key, "string", obj_[key]);
      return fallback;
    }
    return obj_[key].get<std::string>();
  }

  // Raw value for structured fields; null when absent.
  json raw(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) ? obj_[key] : json();
  }

  void finish() {
    for (auto it = obj_.begin(); it != obj_.end(); ++it)
      if (!seen_.count(it.key())) errors_.push_back(name_ + "." + it.key() + ": unknown key");
  }

  void error(const std::string& key, const std::string& what) { errors_.push_back(name_ + "." + key + ": " + what); }

private:
  void bad_type(const std::string& key, const char* want, const json& got) {
    errors_.push_back(name_ + "." + key + ": expected " + want + ", got " + type_name(got));
  }

  json obj_ = json::object();
  std::string name_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

bool is_state_json(const json& j) {
  if (!j.is_array() || j.empty()) return false;
  for (const auto& p : j)
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) return false;
  return true;
}

bool is_number_array(const json& j) {
  if (!j.is_array()) return false;
  for (const auto& v : j)
    if (!v.is_number()) return false;
  return true;
}

// Reads a shell state (one pair broadcast, or one pair per shell).
json read_state(BlockReader& r, const std::string& key, const json& fallback, int shells) {
  json v = r.raw(key);
  if (v.is_null()) return fallback;
  if (!is_state_json(v)) {
    r.error(key, "expected [[re, im], ...]");
    return fallback;
  }
  if (v.size() != 1 && static_cast<int>(v.size()) != shells) {
    r.error(key, "needs 1 or model.n = " + std::to_string(shells) + " pairs, got " + std::to_string(v.size()));
    return fallback;
  }
  return v;
}

json resolve_phi(const json& in, int dim, const std::string& where, std::vector<std::string>& errors) {
  BlockReader r(in, where, errors);
  const std::string kind = r.string("kind", "");
  json out = {{"kind", kind}};
  if (kind == "CosineOfCoordinate") {
    const auto k = r.integer("k", 1);
    if (k < 1 || k > dim) r.error("k", "must lie in [1, " + std::to_string(dim) + "]");
    out["k"] = k;
    out["frequency"] = r.number("frequency", 1.0);
  } else if (kind == "BumpOfNormSq") {
    json c = r.raw("center");
    if (c.is_null()) c = std::vector<double>(static_cast<std::size_t>(dim), 0.0);
    if (!is_number_array(c) || static_cast<int>(c.size()) != dim) r.error("center", "needs " + std::to_string(dim) + " numbers");
    out["center"] = c;
    const double s = r.number("scale", 1.0);
    if (!(s > 0)) r.error("scale", "must be > 0");
    out["scale"] = s;
  } else if (kind == "LogisticOfLinear") {
    json w = r.raw("weights");
    if (w.is_null()) {
      std::vector<double> d(static_cast<std::size_t>(dim));
      for (int i = 0; i < dim; ++i) d[static_cast<std::size_t>(i)] = 1.0 - 0.3 * i;
      w = d;
    }
    if (!is_number_array(w) || static_cast<int>(w.size()) != dim) r.error("weights", "needs " + std::to_string(dim) + " numbers");
    out["weights"] = w;
  } else {
    r.error("kind", "must be CosineOfCoordinate, BumpOfNormSq or LogisticOfLinear");
  }
  r.finish();
  return out;
}

json default_phis(int dim) {
  std::vector<double> w(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) w[static_cast<std::size_t>(i)] = 1.0 - 0.3 * i;
  return json::array({
      {{"kind", "CosineOfCoordinate"}, {"k", 1}, {"frequency", 1.0}},
      {{"kind", "BumpOfNormSq"}, {"center", std::vector<double>(static_cast<std::size_t>(dim), 0.0)}, {"scale", 1.0}},
      {{"kind", "LogisticOfLinear"}, {"weights", w}},
  });
}

json resolve_experiment(Command command, const json& doc, const ModelParams& model, const SdePathConfig& integ,
                        std::vector<std::string>& errors) {
  BlockReader r(doc, "experiment", errors);
  const int n = model.n;
  const int dim = real_dimension(std::max(n, 1));
  json e;
  e["name"] = to_string(command);
  const std::string name = r.string("name", to_string(command));
  if (name != to_string(command))
    r.error("name", "config is for '" + name + "' but the subcommand is '" + to_string(command) + "'");
  auto positive_count = [&](const std::string& key, std::int64_t fallback, std::int64_t minimum) {
    const auto v = r.integer(key, fallback);
    if (v < minimum) r.error(key, "must be >= " + std::to_string(minimum));
    return v;
  };

  switch (command) {
    case Command::Simulate: {
      e["xi"] = read_state(r, "xi", json::array({json::array({0.1, 0.0})}), n);
      e["with_convolution"] = r.boolean("with_convolution", false);
      e["path_index"] = positive_count("path_index", 0, 0);
      e["ensemble"] = positive_count("ensemble", 0, 0);
      const auto p = r.integer("p", 2);
      if (p != 2 && p != 4) r.error("p", "must be 2 or 4");
      e["p"] = p;
      e["records"] = positive_count("records", 50, 1);
      if (e["ensemble"].get<std::int64_t>() > 0 && e["ensemble"].get<std::int64_t>() < 1000)
        r.error("ensemble", "must be 0 (off) or >= 1000");
      break;
    }
    case Command::BelCheck: {
      e["x"] = read_state(r, "x", json::array({json::array({0.3, 0.3})}), n);
      const auto t = r.optional_number("t");
      e["t"] = t ? *t : integ.T;
      if (!(e["t"].get<double>() > 0)) r.error("t", "must be > 0");
      e["M"] = positive_count("M", 1000, 1000);
      const double h = r.number("fd_step", 1e-2);
      if (!(h >= 0)) r.error("fd_step", "must be >= 0 (0 disables the FD oracle)");
      e["fd_step"] = h;
      const double delta = r.number("delta", 0.0);
      if (!(delta >= 0 && delta <= 0.5)) r.error("delta", "must lie in [0, 1/2]");
      e["delta"] = delta;
      json phis = r.raw("phis");
      if (phis.is_null()) {
        e["phis"] = default_phis(dim);
      } else if (!phis.is_array() || phis.empty()) {
        r.error("phis", "expected a non-empty array of test functions");
        e["phis"] = default_phis(dim);
      } else {
        json out = json::array();
        for (std::size_t i = 0; i < phis.size(); ++i)
          out.push_back(resolve_phi(phis[i], dim, "experiment.phis[" + std::to_string(i) + "]", errors));
        e["phis"] = out;
      }
      break;
    }
    case Command::Ergodicity: {
      const double mix = 1.0 / (model.kappa * model.eigenvalue(1));
      std::vector<double> b(1, 0.0);
      json xi_b = json::array();
      for (int i = 0; i < n; ++i) xi_b.push_back(json::array({i == 0 ? 10.0 : 0.0, 0.0}));
      e["xi_a"] = read_state(r, "xi_a", json::array({json::array({0.0, 0.0})}), n);
      e["xi_b"] = read_state(r, "xi_b", xi_b, n);
      e["ensemble"] = positive_count("ensemble", 1000, 1000);
      const auto burn = r.optional_number("burn_in");
      const auto horizon = r.optional_number("horizon");
      e["burn_in"] = burn ? *burn : 5.0 * mix;
      e["horizon"] = horizon ? *horizon : 20.0 * mix;
      if (!(e["burn_in"].get<double>() > 0)) r.error("burn_in", "must be > 0");
      if (!(e["horizon"].get<double>() > e["burn_in"].get<double>())) r.error("horizon", "must exceed burn_in");
      e["points"] = positive_count("points", 16, 2);
      e["replicates"] = positive_count("replicates", 1, 1);
      e["moments"] = r.boolean("moments", true);
      const auto p = r.integer("p", 2);
      if (p != 2 && p != 4) r.error("p", "must be 2 or 4");
      e["p"] = p;
      e["records"] = positive_count("records", 50, 1);
      e["decay"] = r.boolean("decay", true);
      const double dn = r.number("decay_xi_norm_sq", 1000.0);
      if (!(dn > 0)) r.error("decay_xi_norm_sq", "must be > 0");
      e["decay_xi_norm_sq"] = dn;
      e["accessibility"] = r.boolean("accessibility", false);
      e["radius"] = r.number("radius", 5.0);
      e["gamma"] = r.number("gamma", 1.0);
      e["accessibility_samples"] = positive_count("accessibility_samples", 1000, 1);
      const double c0 = r.number("C0", 0.0);
      if (!(c0 >= 0)) r.error("C0", "must be >= 0 (0 estimates it)");
      e["C0"] = c0;
      if (!(e["radius"].get<double>() > 0)) r.error("radius", "must be > 0");
      if (!(e["gamma"].get<double>() > 0)) r.error("gamma", "must be > 0");
      if (e["xi_a"] == e["xi_b"]) r.error("xi_b", "must differ from xi_a");
      break;
    }
    case Command::NoiseCheck: {
      e["T"] = r.number("T", 1.0);
      e["epsilon"] = r.number("epsilon", 0.5);
      e["samples"] = positive_count("samples", 10000, 10000);
      e["y"] = r.number("y", 1.0);
      json grid = r.raw("epsilon_grid");
      if (grid.is_null()) {
        std::vector<double> g;
        for (int i = 0; i <= 20; ++i) g.push_back(std::pow(10.0, -0.25 * i));
        grid = g;
      }
      bool ok = is_number_array(grid) && grid.size() >= 2;
      for (std::size_t i = 0; ok && i < grid.size(); ++i)
        ok = grid[i].get<double>() > 0 && (i == 0 || grid[i].get<double>() < grid[i - 1].get<double>());
      if (!ok) r.error("epsilon_grid", "needs at least two positive, strictly decreasing numbers");
      e["epsilon_grid"] = grid;
      json qs = r.raw("moments_q");
      if (qs.is_null()) qs = json::array({1.0, 2.0, 3.0, 4.0});
      bool qok = is_number_array(qs) && !qs.empty();
      for (std::size_t i = 0; qok && i < qs.size(); ++i) qok = qs[i].get<double>() >= 1;
      if (!qok) r.error("moments_q", "needs numbers >= 1");
      e["moments_q"] = qs;
      if (!(e["T"].get<double>() > 0)) r.error("T", "must be > 0");
      if (!(e["epsilon"].get<double>() > 0)) r.error("epsilon", "must be > 0");
      if (e["y"].get<double>() == 0) r.error("y", "must be nonzero");
      break;
    }
    case Command::Refine: {
      json coarse = r.raw("n_coarse");
      if (coarse.is_null()) {
        json c = json::array();
        for (int m = 2; m < n; m *= 2) c.push_back(m);
        if (c.empty()) c.push_back(std::max(1, n - 1));
        coarse = c;
      }
      const auto fine = r.integer("n_fine", n);
      bool ok = coarse.is_array() && !coarse.empty();
      for (std::size_t i = 0; ok && i < coarse.size(); ++i)
        ok = coarse[i].is_number_integer() && coarse[i].get<std::int64_t>() >= 2 && coarse[i].get<std::int64_t>() < fine;
      if (!ok) r.error("n_coarse", "needs integers in [2, n_fine)");
      if (fine != n) r.error("n_fine", "must equal model.n (the fine model is the configured one)");
      e["n_coarse"] = coarse;
      e["n_fine"] = fine;
      e["xi"] = read_state(r, "xi", json::array({json::array({0.1, 0.0})}), n);
      e["path_index"] = positive_count("path_index", 0, 0);
      break;
    }
  }
  r.finish();
  return e;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error("invalid config: " + join(violations)), violations_(std::move(violations)) {}

LevyMeasureSpec NoiseBlock::spec() const {
  return family == LevyFamily::TemperedStable ? LevyMeasureSpec::tempered_stable(ts)
                                              : LevyMeasureSpec::variance_gamma(vg);
}

RunConfig resolve_config(Command command, const json& doc, const Overrides& overrides) {
  std::vector<std::string> errors;
  RunConfig c;
  c.command = command;
  if (!doc.is_object()) throw ConfigError({std::string("config: expected a JSON object, got ") + type_name(doc)});

  BlockReader top(doc, "config", errors);
  {
    BlockReader r(top.raw("model"), "model", errors);
    const std::string kind = r.string("kind", "SABRA");
    if (kind == "SABRA") c.model.model = ShellModelKind::SABRA;
    else if (kind == "GOY") c.model.model = ShellModelKind::GOY;
    else r.error("kind", "must be GOY or SABRA");
    const auto n = r.integer("n", c.model.n);
    c.model.n = static_cast<int>(std::clamp<std::int64_t>(n, -1, 1 << 20));
    c.model.kappa = r.number("kappa", c.model.kappa);
    c.model.a = r.number("a", c.model.a);
    c.model.b = r.number("b", c.model.b);
    c.model.k0 = r.number("k0", c.model.k0);
    c.model.lambda = r.number("lambda", c.model.lambda);
    c.model.theta = r.number("theta", c.model.theta);
    r.finish();
    for (auto& v : c.model.violations()) errors.push_back(v);
  }
  {
    BlockReader r(top.raw("noise"), "noise", errors);
    const std::string family = r.string("family", "TemperedStable");
    if (family == "TemperedStable") {
      c.noise.family = LevyFamily::TemperedStable;
      c.noise.ts.c_plus = r.number("c_plus", c.noise.ts.c_plus);
      c.noise.ts.c_minus = r.number("c_minus", c.noise.ts.c_minus);
      c.noise.ts.beta_plus = r.number("beta_plus", c.noise.ts.beta_plus);
      c.noise.ts.beta_minus = r.number("beta_minus", c.noise.ts.beta_minus);
      c.noise.ts.alpha = r.number("alpha", c.noise.ts.alpha);
      for (auto& v : LevyMeasureSpec::violations(c.noise.ts)) errors.push_back(v);
    } else if (family == "VarianceGamma") {
      c.noise.family = LevyFamily::VarianceGamma;
      c.noise.vg.sigma = r.number("sigma", c.noise.vg.sigma);
      c.noise.vg.theta = r.number("theta_vg", c.noise.vg.theta);
      c.noise.vg.vartheta = r.number("vartheta", c.noise.vg.vartheta);
      for (auto& v : LevyMeasureSpec::violations(c.noise.vg)) errors.push_back(v);
    } else {
      r.error("family", "must be TemperedStable or VarianceGamma");
    }
    c.noise.delta_cut = r.number("delta_cut", c.noise.delta_cut);
    r.finish();
  }
  {
    BlockReader r(top.raw("integrator"), "integrator", errors);
    c.integrator.dt = r.number("dt", c.integrator.dt);
    c.integrator.T = r.number("T", c.integrator.T);
    c.integrator.R = r.optional_number("R");
    const std::string scheme = r.string("scheme", "SemiImplicitEuler");
    if (scheme == "SemiImplicitEuler") c.integrator.scheme = Scheme::SemiImplicitEuler;
    else if (scheme == "ExponentialEuler") c.integrator.scheme = Scheme::ExponentialEuler;
    else r.error("scheme", "must be SemiImplicitEuler or ExponentialEuler");
    r.finish();
    c.integrator.delta_cut = c.noise.delta_cut;
    for (auto& v : c.integrator.violations()) errors.push_back(v);
  }

  const json seed = top.raw("seed");
  if (seed.is_null()) c.seed = 0;
  else if (seed.is_number_unsigned()) c.seed = seed.get<std::uint64_t>();
  else if (seed.is_number_integer() && seed.get<std::int64_t>() >= 0) c.seed = static_cast<std::uint64_t>(seed.get<std::int64_t>());
  else errors.push_back(std::string("config.seed: expected a non-negative 64-bit integer, got ") + type_name(seed));
  c.output_dir = top.string("output_dir", c.output_dir);
  const auto workers = top.integer("workers", 0);
  if (workers < 0) errors.push_back("config.workers: must be >= 0 (0 uses every hardware thread)");
  c.workers = static_cast<unsigned>(std::max<std::int64_t>(workers, 0));
  // Only meaningful once model and integrator are sound.
  const bool base_ok = c.model.violations().empty() && c.integrator.violations().empty();
  json exp = top.raw("experiment");
  top.finish();
  if (base_ok) c.experiment = resolve_experiment(command, exp, c.model, c.integrator, errors);

  if (overrides.seed) c.seed = *overrides.seed;
  if (const char* env = std::getenv("LEVYSHELL_OUTPUT_DIR"); env && *env) c.output_dir = env;
  if (overrides.output_dir) c.output_dir = *overrides.output_dir;
  if (overrides.workers) c.workers = *overrides.workers;
  if (c.workers == 0) c.workers = default_worker_count();
  if (c.output_dir.empty()) errors.push_back("config.output_dir: must not be empty");

  if (!errors.empty()) throw ConfigError(errors);
  c.integrator.seed = c.seed;
  return c;
}

RunConfig load_config(Command command, const std::string& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open '" + path + "'"});
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({"config: '" + path + "' is not valid JSON: " + e.what()});
  }
  return resolve_config(command, doc, overrides);
}

json manifest(const RunConfig& c) {
  json m;
  m["command"] = to_string(c.command);
  m["model"] = {{"kind", to_string(c.model.model)}, {"n", c.model.n},         {"kappa", c.model.kappa},
                {"a", c.model.a},                   {"b", c.model.b},         {"k0", c.model.k0},
                {"lambda", c.model.lambda},         {"theta", c.model.theta}};
  if (c.noise.family == LevyFamily::TemperedStable) {
    m["noise"] = {{"family", "TemperedStable"},        {"c_plus", c.noise.ts.c_plus},
                  {"c_minus", c.noise.ts.c_minus},     {"beta_plus", c.noise.ts.beta_plus},
                  {"beta_minus", c.noise.ts.beta_minus}, {"alpha", c.noise.ts.alpha},
                  {"delta_cut", c.noise.delta_cut}};
  } else {
    m["noise"] = {{"family", "VarianceGamma"},
                  {"sigma", c.noise.vg.sigma},
                  {"theta_vg", c.noise.vg.theta},
                  {"vartheta", c.noise.vg.vartheta},
                  {"delta_cut", c.noise.delta_cut}};
  }
  m["integrator"] = {{"dt", c.integrator.dt},
                     {"T", c.integrator.T},
                     {"scheme", to_string(c.integrator.scheme)},
                     {"R", c.integrator.R ? json(*c.integrator.R) : json()}};
  m["experiment"] = c.experiment;
  m["seed"] = c.seed;
  m["output_dir"] = c.output_dir;
  m["workers"] = c.workers;
  m["rng"] = {
      {"generator", "Philox4x32-10"},
      {"key", "seed as two 32-bit words (low, high)"},
      {"counter", "words 2-3 hold the stream id, words 0-1 the block index"},
      {"stream_id", "(purpose << 48) xor index"},
      {"purposes",
       {{"trajectory", stream_purpose::trajectory},
        {"bel", stream_purpose::bel},
        {"ergodicity_a", stream_purpose::ergodicity_a},
        {"ergodicity_b", stream_purpose::ergodicity_b},
        {"small_deviation", stream_purpose::small_deviation},
        {"accessibility", stream_purpose::accessibility},
        {"constants", stream_purpose::constants},
        {"moments", stream_purpose::moments},
        {"refinement", stream_purpose::refinement},
        {"sampler_check", stream_purpose::sampler_check}}},
  };
  m["note"] = "results do not depend on the worker count";
  return m;
}

ShellState state_from_json(const json& j, int shells) {
  ShellState u(static_cast<std::size_t>(shells));
  for (int i = 0; i < shells; ++i) {
    const json& p = j.size() == 1 ? j[0] : j[static_cast<std::size_t>(i)];
    u[static_cast<std::size_t>(i)] = {p[0].get<double>(), p[1].get<double>()};
  }
  return u;
}

json state_to_json(const ShellState& u) {
  json out = json::array();
  for (const auto& z : u) out.push_back(json::array({z.real(), z.imag()}));
  return out;
}

}  // namespace levyshell::cli
