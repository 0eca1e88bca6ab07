#include "grkin/runner.hpp"

#include "grkin/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace grkin {

namespace {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest representation that parses back to the same double.
std::string fmt_shortest(double x) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

[[noreturn]] void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorCode::ValidationError, field + ": " + why);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& field, const std::string& text) {
  const std::string s = trim(text);
  double x = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(x)) invalid(field, "not a number: '" + s + "'");
  return x;
}

long long to_integer(const std::string& field, const std::string& text) {
  const std::string s = trim(text);
  long long x = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) invalid(field, "not an integer: '" + s + "'");
  return x;
}

bool to_bool(const std::string& field, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  invalid(field, "expected true or false, got '" + s + "'");
}

std::vector<double> to_list(const std::string& field, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(to_double(field, item));
  }
  return out;
}

std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) s += ",";
    s += fmt_shortest(xs[k]);
  }
  return s;
}

const char* model_name(ModelKind m) { return m == ModelKind::Linear ? "linear" : "nonlinear"; }

const char* initial_name(InitialData d) {
  switch (d) {
    case InitialData::FarFromEquilibrium: return "far-from-equilibrium";
    case InitialData::Smooth: return "smooth";
    case InitialData::Random: return "random";
    case InitialData::PerturbedEquilibrium: return "perturbed-equilibrium";
    case InitialData::Equilibrium: return "equilibrium";
  }
  return "";
}

FluxType parse_flux(const std::string& field, const std::string& s) {
  const std::string t = trim(s);
  if (t == "lax-friedrichs") return FluxType::LaxFriedrichs;
  if (t == "centered") return FluxType::Centered;
  if (t == "upwind") return FluxType::Upwind;
  invalid(field, "unknown flux '" + t + "'");
}

// One configuration entry: how to read it into a RunConfig and how to print it.
struct Key {
  const char* name;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"experiment.test",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.test = static_cast<int>(to_integer(f, v)); },
       [](const RunConfig& c) { return std::to_string(c.test); }},
      {"experiment.model",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         const std::string t = trim(v);
         if (t == "linear") c.model = ModelKind::Linear;
         else if (t == "nonlinear") c.model = ModelKind::Nonlinear;
         else invalid(f, "unknown model '" + t + "'");
       },
       [](const RunConfig& c) { return std::string(model_name(c.model)); }},
      {"experiment.initial_data",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         const std::string t = trim(v);
         for (InitialData d : {InitialData::FarFromEquilibrium, InitialData::Smooth, InitialData::Random,
                               InitialData::PerturbedEquilibrium, InitialData::Equilibrium}) {
           if (t == initial_name(d)) {
             c.initial = d;
             return;
           }
         }
         invalid(f, "unknown initial data '" + t + "'");
       },
       [](const RunConfig& c) { return std::string(initial_name(c.initial)); }},
      {"experiment.seed",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         const long long s = to_integer(f, v);
         if (s < 0) invalid(f, "seed must be nonnegative");
         c.seed = static_cast<std::uint64_t>(s);
       },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"grid.torus_length",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.torus_length = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.torus_length); }},
      {"grid.nx", [](RunConfig& c, const std::string& f, const std::string& v) { c.nx = static_cast<int>(to_integer(f, v)); },
       [](const RunConfig& c) { return std::to_string(c.nx); }},
      {"grid.nv", [](RunConfig& c, const std::string& f, const std::string& v) { c.nv = static_cast<int>(to_integer(f, v)); },
       [](const RunConfig& c) { return std::to_string(c.nv); }},
      {"grid.vstar", [](RunConfig& c, const std::string& f, const std::string& v) { c.vstar = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.vstar); }},
      {"profiles.chi1", [](RunConfig& c, const std::string&, const std::string& v) { c.chi1 = trim(v); },
       [](const RunConfig& c) { return c.chi1; }},
      {"profiles.chi2", [](RunConfig& c, const std::string&, const std::string& v) { c.chi2 = trim(v); },
       [](const RunConfig& c) { return c.chi2; }},
      {"profiles.symmetrize",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.symmetrize = to_bool(f, v); },
       [](const RunConfig& c) { return std::string(c.symmetrize ? "true" : "false"); }},
      {"flux.kind", [](RunConfig& c, const std::string& f, const std::string& v) { c.flux = parse_flux(f, v); },
       [](const RunConfig& c) { return std::string(to_string(c.flux)); }},
      {"flux.lambda",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         if (trim(v) == "auto") c.lambda.reset();
         else c.lambda = to_double(f, v);
       },
       [](const RunConfig& c) { return c.lambda ? fmt_shortest(*c.lambda) : std::string("auto"); }},
      {"time.dt", [](RunConfig& c, const std::string& f, const std::string& v) { c.dt = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.dt); }},
      {"time.dt_max", [](RunConfig& c, const std::string& f, const std::string& v) { c.dt_max = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.dt_max); }},
      {"time.dt_min", [](RunConfig& c, const std::string& f, const std::string& v) { c.dt_min = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.dt_min); }},
      {"time.t_final",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         if (trim(v) == "auto") c.t_final.reset();
         else c.t_final = to_double(f, v);
       },
       [](const RunConfig& c) { return c.t_final ? fmt_shortest(*c.t_final) : std::string("auto"); }},
      {"time.growth_factor",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.growth_factor = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.growth_factor); }},
      {"time.shrink_factor",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.shrink_factor = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.shrink_factor); }},
      {"newton.tol_residual",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.newton.tol_residual = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.newton.tol_residual); }},
      {"newton.max_iterations",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         c.newton.max_iterations = static_cast<int>(to_integer(f, v));
       },
       [](const RunConfig& c) { return std::to_string(c.newton.max_iterations); }},
      {"newton.mass_drift_tol",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.newton.mass_diff_drift_tol = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.newton.mass_diff_drift_tol); }},
      {"newton.accept_iterations",
       [](RunConfig& c, const std::string& f, const std::string& v) {
         c.accept_iterations = static_cast<int>(to_integer(f, v));
       },
       [](const RunConfig& c) { return std::to_string(c.accept_iterations); }},
      {"newton.truncated",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.truncated = to_bool(f, v); },
       [](const RunConfig& c) { return std::string(c.truncated ? "true" : "false"); }},
      {"diagnostics.delta_fraction",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.delta_fraction = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.delta_fraction); }},
      {"diagnostics.envelope_fraction",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.envelope_fraction = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.envelope_fraction); }},
      {"diagnostics.fit_floor",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.fit_floor = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.fit_floor); }},
      {"initial.amplitude",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.perturbation_amplitude = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.perturbation_amplitude); }},
      {"initial.rho",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.perturbation_rho = to_double(f, v); },
       [](const RunConfig& c) { return fmt_shortest(c.perturbation_rho); }},
      {"output.snapshots",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.snapshots = to_list(f, v); },
       [](const RunConfig& c) { return join(c.snapshots); }},
      {"output.dir", [](RunConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); },
       [](const RunConfig& c) { return c.output_dir; }},
      {"output.emit_plot_script",
       [](RunConfig& c, const std::string& f, const std::string& v) { c.emit_plot_script = to_bool(f, v); },
       [](const RunConfig& c) { return std::string(c.emit_plot_script ? "true" : "false"); }},
  };
  return table;
}

const Key* find_key(const std::string& name) {
  for (const Key& k : keys()) {
    if (name == k.name) return &k;
  }
  return nullptr;
}

std::map<std::string, std::string> flatten(const pt::ptree& tree) {
  std::map<std::string, std::string> out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw Error(ErrorCode::ValidationError, section + ": keys must sit inside a [section]");
    }
    for (const auto& [key, value] : body) out[section + "." + key] = value.data();
  }
  return out;
}

}  // namespace

RunConfig defaults_for_test(int test) {
  RunConfig c;
  c.test = test;
  c.torus_length = std::numbers::pi;
  switch (test) {
    case 0:
    case 1:
    case 2:
      c.model = ModelKind::Linear;
      c.initial = InitialData::FarFromEquilibrium;
      c.chi1 = "heavytail";
      c.chi2 = test == 2 ? "oscillating" : "heavytail";
      c.dt = 0.1;
      c.snapshots = {0.0, 0.8, 1.2, 1.6, 2.5, 50.0};
      break;
    case 3:
      c.model = ModelKind::Nonlinear;
      c.initial = InitialData::Smooth;
      c.chi1 = c.chi2 = "gaussian";
      c.dt = 1e-3;
      c.snapshots = {0.0, 0.83, 2.25, 3.35, 9.67, 100.0};
      break;
    case 4:
      c.model = ModelKind::Nonlinear;
      c.initial = InitialData::Random;
      c.chi1 = "heavytail";
      c.chi2 = "oscillating";
      c.dt = 1e-3;
      c.snapshots = {0.0, 0.16, 0.38, 0.77, 1.66, 49.9};
      break;
    default:
      invalid("experiment.test", "must be 0, 1, 2, 3 or 4");
  }
  return c;
}

RunConfig parse_config(const std::string& text, const std::map<std::string, std::string>& overrides) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  std::map<std::string, std::string> values = flatten(tree);
  for (const auto& [k, v] : overrides) values[k] = v;

  for (const auto& [k, v] : values) {
    if (!find_key(k)) throw Error(ErrorCode::ValidationError, k + ": unknown key");
  }

  int test = 0;
  if (auto it = values.find("experiment.test"); it != values.end()) {
    test = static_cast<int>(to_integer(it->first, it->second));
  }
  RunConfig cfg = defaults_for_test(test);
  for (const Key& k : keys()) {
    if (auto it = values.find(k.name); it != values.end()) k.set(cfg, k.name, it->second);
  }
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::optional<std::string>& path, const std::map<std::string, std::string>& overrides) {
  std::string text;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read config " + *path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return parse_config(text, overrides);
}

std::string emit_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const Key& k : keys()) {
    const std::string name = k.name;
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << "\n";
      out << "[" << sec << "]\n";
      section = sec;
    }
    out << name.substr(dot + 1) << " = " << k.get(cfg) << "\n";
  }
  return out.str();
}

void validate(const RunConfig& c) {
  if (c.test < 0 || c.test > 4) invalid("experiment.test", "must be 0, 1, 2, 3 or 4");
  if (!(c.torus_length > 0.0)) invalid("grid.torus_length", "must be positive");
  if (c.nx < 3) invalid("grid.nx", "N must be at least 3");
  if (c.nx % 2 == 0) invalid("grid.nx", "N must be odd");
  if (c.nv < 1) invalid("grid.nv", "L must be at least 1");
  if (!(c.vstar > 0.0)) invalid("grid.vstar", "must be positive");
  for (const auto& [field, name] : {std::pair{"profiles.chi1", c.chi1}, std::pair{"profiles.chi2", c.chi2}}) {
    if (name != "gaussian" && name != "heavytail" && name != "oscillating" && name.rfind("file:", 0) != 0) {
      invalid(field, "unknown profile '" + name + "'");
    }
  }
  if (c.lambda && !(*c.lambda > 0.0)) invalid("flux.lambda", "must be positive");
  if (!(c.dt > 0.0)) invalid("time.dt", "must be positive");
  if (!(c.dt_min > 0.0)) invalid("time.dt_min", "must be positive");
  if (c.model == ModelKind::Nonlinear) {
    if (c.dt_max < c.dt) invalid("time.dt_max", "must be at least time.dt");
    if (c.dt_min > c.dt) invalid("time.dt_min", "must not exceed time.dt");
  }
  if (c.t_final && !(*c.t_final >= 0.0)) invalid("time.t_final", "must be nonnegative");
  if (!(c.growth_factor > 1.0)) invalid("time.growth_factor", "must exceed 1");
  if (!(c.shrink_factor > 0.0 && c.shrink_factor < 1.0)) invalid("time.shrink_factor", "must lie in (0, 1)");
  if (!(c.newton.tol_residual > 0.0)) invalid("newton.tol_residual", "must be positive");
  if (c.newton.max_iterations < 1) invalid("newton.max_iterations", "must be at least 1");
  if (!(c.newton.mass_diff_drift_tol > 0.0)) invalid("newton.mass_drift_tol", "must be positive");
  if (c.accept_iterations < 0) invalid("newton.accept_iterations", "must be nonnegative");
  if (!(c.delta_fraction > 0.0 && c.delta_fraction < 1.0)) invalid("diagnostics.delta_fraction", "must lie in (0, 1)");
  if (!(c.envelope_fraction > 0.0 && c.envelope_fraction < 1.0)) {
    invalid("diagnostics.envelope_fraction", "must lie in (0, 1)");
  }
  if (!(c.fit_floor > 0.0)) invalid("diagnostics.fit_floor", "must be positive");
  if (!(c.perturbation_rho > 0.0)) invalid("initial.rho", "must be positive");
  if (!(std::abs(c.perturbation_amplitude) < 1.0)) invalid("initial.amplitude", "must lie in (-1, 1)");
  for (std::size_t k = 0; k < c.snapshots.size(); ++k) {
    if (c.snapshots[k] < 0.0) invalid("output.snapshots", "times must be nonnegative");
    if (k && c.snapshots[k] <= c.snapshots[k - 1]) invalid("output.snapshots", "times must be increasing");
  }
}

double effective_lambda(const RunConfig& cfg) {
  if (cfg.lambda) return *cfg.lambda;
  const double dx = cfg.torus_length / cfg.nx;
  // The linear scheme needs no monotonicity, so it keeps lambda = dx/(2 dt);
  // the nonlinear one is floored at the monotonicity threshold v*/2.
  if (cfg.model == ModelKind::Linear) return dx / (2.0 * cfg.dt);
  return std::max(0.5 * cfg.vstar, dx / (2.0 * cfg.dt));
}

double effective_t_final(const RunConfig& cfg) {
  if (cfg.t_final) return *cfg.t_final;
  return cfg.snapshots.empty() ? 0.0 : cfg.snapshots.back();
}

VelocityProfile make_profile(const std::string& name, const GridSpec& grid, bool symmetrize) {
  if (name == "gaussian") return discretize_profile(profiles::gaussian, grid, symmetrize);
  if (name == "heavytail") return discretize_profile(profiles::heavy_tailed, grid, symmetrize);
  if (name == "oscillating") return discretize_profile(profiles::oscillating, grid, symmetrize);
  if (name.rfind("file:", 0) == 0) {
    const std::string path = name.substr(5);
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot read profile file " + path);
    std::vector<double> vals;
    double x = 0.0;
    while (in >> x) vals.push_back(x);
    if (!in.eof()) throw Error(ErrorCode::ParseError, "profile file " + path + " holds a non-number");
    return profile_from_samples(Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size())),
                                grid, symmetrize);
  }
  throw Error(ErrorCode::ValidationError, "unknown profile '" + name + "'");
}

SpeciesPair initial_state(const RunConfig& cfg, const GridSpec& grid) {
  SpeciesPair F = SpeciesPair::zeros(grid);
  const double pi = std::numbers::pi;
  auto bump = [pi](double x, double v) { return std::exp(-((x - pi / 2) * (x - pi / 2) + v * v / 2) / 0.2); };
  switch (cfg.initial) {
    case InitialData::FarFromEquilibrium:
      for (int i = 0; i < grid.N; ++i) {
        const double x = grid.x_centers[i];
        for (int k = 0; k < grid.nv(); ++k) {
          const double v = grid.v_centers[k];
          F.f(i, k) = bump(x, v) / 0.1;
          F.g(i, k) = (1.0 + std::cos(4.0 * x)) * bump(x, v);
        }
      }
      break;
    case InitialData::Smooth:
      for (int i = 0; i < grid.N; ++i) {
        const double x = grid.x_centers[i];
        for (int k = 0; k < grid.nv(); ++k) {
          const double v = grid.v_centers[k];
          F.f(i, k) = profiles::gaussian(v) * v * v * v * v * (1.0 + std::cos(2.0 * x));
          F.g(i, k) = (1.0 + std::cos(4.0 * x)) * bump(x, v);
        }
      }
      break;
    case InitialData::Random: {
      std::mt19937_64 gen(cfg.seed);
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      for (int i = 0; i < grid.N; ++i)
        for (int k = 0; k < grid.nv(); ++k) F.f(i, k) = uni(gen);
      for (int i = 0; i < grid.N; ++i)
        for (int k = 0; k < grid.nv(); ++k) F.g(i, k) = uni(gen);
      break;
    }
    case InitialData::PerturbedEquilibrium:
    case InitialData::Equilibrium: {
      const VelocityProfile chi1 = make_profile(cfg.chi1, grid, cfg.symmetrize);
      const VelocityProfile chi2 = make_profile(cfg.chi2, grid, cfg.symmetrize);
      const double r = cfg.perturbation_rho;
      const double a = cfg.initial == InitialData::Equilibrium ? 0.0 : cfg.perturbation_amplitude;
      for (int i = 0; i < grid.N; ++i) {
        const double phase = 2.0 * pi * grid.x_centers[i] / grid.torus_length;
        for (int k = 0; k < grid.nv(); ++k) {
          F.f(i, k) = r * chi1.values[k] * (1.0 + a * std::cos(phase));
          F.g(i, k) = chi2.values[k] / r * (1.0 + a * std::sin(phase));
        }
      }
      break;
    }
  }
  return F;
}

std::string format_csv(const std::vector<TimeSeriesRecord>& series) {
  std::string out = "t,weighted_norm,rho_f_l2,rho_g_l2,entropy,mass_difference,bounds_pass,dt_used,newton_iters\n";
  for (const TimeSeriesRecord& r : series) {
    out += fmt17(r.t) + "," + fmt17(r.weighted_norm) + "," + fmt17(r.rho_f_l2) + "," + fmt17(r.rho_g_l2) + ",";
    if (r.entropy) out += fmt17(*r.entropy);
    out += "," + fmt17(r.mass_difference) + "," + (r.bounds_pass ? "1" : "0") + "," + fmt17(r.dt_used) + ",";
    if (r.newton_iterations) out += std::to_string(*r.newton_iterations);
    out += "\n";
  }
  return out;
}

std::vector<TimeSeriesRecord> parse_csv(const std::string& text) {
  std::vector<TimeSeriesRecord> out;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
    while (cols.size() < 9) cols.emplace_back();
    TimeSeriesRecord r;
    r.t = to_double("t", cols[0]);
    r.weighted_norm = to_double("weighted_norm", cols[1]);
    r.rho_f_l2 = to_double("rho_f_l2", cols[2]);
    r.rho_g_l2 = to_double("rho_g_l2", cols[3]);
    if (!cols[4].empty()) r.entropy = to_double("entropy", cols[4]);
    r.mass_difference = to_double("mass_difference", cols[5]);
    r.bounds_pass = cols[6] == "1";
    r.dt_used = to_double("dt_used", cols[7]);
    if (!cols[8].empty()) r.newton_iterations = static_cast<int>(to_integer("newton_iters", cols[8]));
    out.push_back(r);
  }
  return out;
}

std::string format_summary(const RunSummary& s) {
  std::ostringstream out;
  auto num = [](double x) { return std::isfinite(x) ? fmt17(x) : std::string(); };
  out << "status = " << s.status << "\n";
  out << "kappa_fit = " << (s.fit ? num(s.fit->kappa) : "") << "\n";
  out << "r_squared = " << (s.fit ? num(s.fit->r_squared) : "") << "\n";
  out << "prefactor = " << (s.fit ? num(s.fit->prefactor) : "") << "\n";
  out << "fit_t_lo = " << (s.fit ? num(s.fit->t_lo) : "") << "\n";
  out << "fit_t_hi = " << (s.fit ? num(s.fit->t_hi) : "") << "\n";
  out << "fit_points = " << (s.fit ? std::to_string(s.fit->points) : "") << "\n";
  out << "fit_error = " << s.fit_error << "\n";
  out << "final_norm = " << num(s.final_norm) << "\n";
  out << "max_mass_drift = " << num(s.max_mass_drift) << "\n";
  out << "f_ratio_min = " << num(s.bounds_extremes.f_ratio_min) << "\n";
  out << "f_ratio_max = " << num(s.bounds_extremes.f_ratio_max) << "\n";
  out << "g_ratio_min = " << num(s.bounds_extremes.g_ratio_min) << "\n";
  out << "g_ratio_max = " << num(s.bounds_extremes.g_ratio_max) << "\n";
  out << "bounds_violations = " << s.bounds_violations << "\n";
  out << "rho_inf_star = " << num(s.rho_inf_star) << "\n";
  out << "lambda = " << num(s.lambda) << "\n";
  out << "delta = " << num(s.ledger.delta) << "\n";
  out << "delta_ceiling = " << num(s.ledger.delta_ceiling) << "\n";
  out << "K_delta = " << num(s.ledger.K_delta) << "\n";
  out << "kappa_certified = " << num(s.ledger.kappa) << "\n";
  out << "min_coercivity_slack = " << num(s.min_coercivity_slack) << "\n";
  out << "min_dissipation_slack = " << num(s.min_dissipation_slack) << "\n";
  out << "min_norm_lower_slack = " << num(s.min_norm_lower_slack) << "\n";
  out << "min_norm_upper_slack = " << num(s.min_norm_upper_slack) << "\n";
  out << "min_phi_estimate_slack = " << num(s.min_phi_estimate_slack) << "\n";
  out << "max_moment_residual_u = " << (s.moment_checked ? num(s.max_moment_residual_u) : "") << "\n";
  out << "max_moment_residual_J = " << (s.moment_checked ? num(s.max_moment_residual_J) : "") << "\n";
  out << "max_poisson_residual = " << num(s.max_poisson_residual) << "\n";
  out << "steps = " << s.steps << "\n";
  out << "rejected_steps = " << s.rejected_steps << "\n";
  out << "wall_clock_seconds = " << num(s.wall_clock_seconds) << "\n";
  return out.str();
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

std::string snapshot_text(double t, const SpeciesPair& F, const GridSpec& grid) {
  std::string out = "# t=" + fmt17(t) + "\n# N=" + std::to_string(grid.N) + " L=" + std::to_string(grid.L) + "\n";
  out.reserve(out.size() + grid.cells() * 100);
  for (int i = 0; i < grid.N; ++i) {
    for (int k = 0; k < grid.nv(); ++k) {
      out += std::to_string(i) + "," + std::to_string(k) + "," + fmt17(grid.x_centers[i]) + "," +
             fmt17(grid.v_centers[k]) + "," + fmt17(F.f(i, k)) + "," + fmt17(F.g(i, k)) + "\n";
    }
  }
  return out;
}

const char* kPlotScript = R"(import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "timeseries.csv"
with open(path) as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]

fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(11, 4))
ax0.semilogy(t, [float(r["weighted_norm"]) for r in rows])
ax0.set_xlabel("t")
ax0.set_ylabel("weighted L2 norm")
ax1.semilogy(t, [float(r["rho_f_l2"]) for r in rows], label="rho_f")
ax1.semilogy(t, [float(r["rho_g_l2"]) for r in rows], label="rho_g")
ax1.set_xlabel("t")
ax1.legend()
fig.tight_layout()
fig.savefig("trend.png", dpi=150)
)";

// Bookkeeping shared by the linear and nonlinear loops.
class Session {
 public:
  Session(const RunConfig& cfg, RunResult& result)
      : cfg_(cfg),
        result_(result),
        grid_(build_grid(cfg.torus_length, cfg.nx, cfg.nv, cfg.vstar)),
        chi1_(make_profile(cfg.chi1, grid_, cfg.symmetrize)),
        chi2_(make_profile(cfg.chi2, grid_, cfg.symmetrize)),
        poisson_(grid_) {
    linear_ = cfg.model == ModelKind::Linear;
    const SpeciesPair FI = initial_state(cfg, grid_);
    rho_ = rho_inf_star(FI, grid_);
    eq_ = build_equilibrium(rho_, chi1_, chi2_, grid_);
    lambda_ = effective_lambda(cfg);
    switch (cfg.flux) {
      case FluxType::LaxFriedrichs: flux_ = FluxKind::lax_friedrichs(lambda_); break;
      case FluxType::Centered: flux_ = FluxKind::centered(); break;
      case FluxType::Upwind: flux_ = FluxKind::upwind(); break;
    }
    // Diffusion carried by the closed moment equations; upwind has none.
    moment_lambda_ = cfg.flux == FluxType::LaxFriedrichs ? lambda_ : 0.0;
    const double dt_cert = linear_ ? cfg.dt : cfg.dt_max;
    ledger_ = constants_ledger(chi1_, chi2_, rho_, grid_, lambda_, dt_cert, cfg.delta_fraction);
    env_ = {cfg.envelope_fraction * rho_, cfg.envelope_fraction * rho_};
    state_ = linear_ ? FI - eq_.F_inf : FI;
    mass0_ = mass_difference(state_, grid_);

    RunSummary& s = result_.summary;
    s.rho_inf_star = rho_;
    s.lambda = lambda_;
    s.ledger = ledger_;
    s.min_coercivity_slack = s.min_dissipation_slack = s.min_norm_lower_slack = kInf;
    s.min_norm_upper_slack = s.min_phi_estimate_slack = kInf;
    s.moment_checked = cfg.flux != FluxType::Upwind;
    s.bounds_extremes = {kInf, -kInf, kInf, -kInf, true};

    t_final_ = effective_t_final(cfg);
    if (!cfg.output_dir.empty()) {
      dir_ = cfg.output_dir;
      std::error_code ec;
      fs::create_directories(dir_, ec);
      if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir_.string() + ": " + ec.message());
      write_file(dir_ / "config.ini", emit_config(cfg));
      if (cfg.emit_plot_script) write_file(dir_ / "plot.py", kPlotScript);
    }
  }

  const GridSpec& grid() const { return grid_; }
  const VelocityProfile& chi1() const { return chi1_; }
  const VelocityProfile& chi2() const { return chi2_; }
  const FluxKind& flux() const { return flux_; }
  const EquilibriumData& eq() const { return eq_; }
  double rho() const { return rho_; }
  double t() const { return t_; }
  double t_final() const { return t_final_; }
  const SpeciesPair& state() const { return state_; }

  double next_output_time() const {
    return next_snapshot_ < cfg_.snapshots.size() ? std::min(cfg_.snapshots[next_snapshot_], t_final_) : t_final_;
  }

  void record_initial() { record(state_, 0.0, 0.0, std::nullopt); }

  void advance_to(SpeciesPair next, double t_new, double dt, std::optional<int> iterations) {
    check_step(next, dt);
    state_ = std::move(next);
    record(state_, t_new, dt, iterations);
  }

  void add_rejections(int n) { result_.summary.rejected_steps += n; }

  void finish(const std::string& status) {
    RunSummary& s = result_.summary;
    s.status = status;
    s.steps = static_cast<int>(result_.series.size()) - 1;
    std::vector<double> ts, vs;
    for (const auto& r : result_.series) {
      ts.push_back(r.t);
      vs.push_back(r.weighted_norm);
    }
    if (!result_.series.empty()) s.final_norm = result_.series.back().weighted_norm;
    try {
      const auto [lo, hi] = default_fit_window(ts, vs, cfg_.fit_floor);
      s.fit = fit_decay_rate(ts, vs, lo, hi, cfg_.fit_floor);
    } catch (const Error& e) {
      s.fit_error = e.what();
    }
    result_.final_state = physical(state_);
    if (!dir_.empty()) {
      write_file(dir_ / "timeseries.csv", format_csv(result_.series));
      write_file(dir_ / "summary.txt", format_summary(s));
    }
  }

 private:
  SpeciesPair deviation(const SpeciesPair& s) const { return linear_ ? s : s - eq_.F_inf; }
  SpeciesPair physical(const SpeciesPair& s) const { return linear_ ? s + eq_.F_inf : s; }

  // Per-step certificates that need both time levels.
  void check_step(const SpeciesPair& next, double dt) {
    RunSummary& s = result_.summary;
    const SpeciesPair Dn = deviation(state_);
    const SpeciesPair Dp = deviation(next);
    if (s.moment_checked) {
      const MomentResiduals m = linear_ ? verify_moment_schemes(Dn, Dp, grid_, rho_, eq_.D0_delta, dt, moment_lambda_)
                                        : verify_nonlinear_moment_schemes(state_, next, eq_, grid_, dt, moment_lambda_);
      s.max_moment_residual_u = std::max(s.max_moment_residual_u, m.u);
      s.max_moment_residual_J = std::max(s.max_moment_residual_J, m.J);
    }
    if (linear_) {
      const SpeciesPair micro = Dp - project_pi(Dp, rho_, chi1_, chi2_, grid_);
      const double lhs = 0.5 * (weighted_inner(Dp, Dp, chi1_, chi2_, rho_, grid_) -
                                weighted_inner(Dn, Dn, chi1_, chi2_, rho_, grid_)) +
                         dt * ledger_.C_mc_star * weighted_inner(micro, micro, chi1_, chi2_, rho_, grid_);
      s.min_coercivity_slack = std::min(s.min_coercivity_slack, -lhs);
    }
  }

  void record(const SpeciesPair& state, double t, double dt, std::optional<int> iterations) {
    RunSummary& s = result_.summary;
    const SpeciesPair D = deviation(state);
    TimeSeriesRecord r;
    r.t = t;
    const double n2 = weighted_inner(D, D, chi1_, chi2_, rho_, grid_);
    r.weighted_norm = std::sqrt(std::max(0.0, n2));
    const auto [rf, rg] = macroscopic_densities(D, grid_);
    r.rho_f_l2 = norm_l2(rf, grid_);
    r.rho_g_l2 = norm_l2(rg, grid_);
    r.mass_difference = mass_difference(state, grid_);
    r.dt_used = dt;
    r.newton_iterations = iterations;

    const Moments m = moments_uJS(D.f - D.g, grid_, eq_.D0_delta);
    SpatialField u = m.u;
    const double mean = inner_l2(u, SpatialField::Ones(grid_.N), grid_) / grid_.torus_length;
    u.array() -= mean;  // rounding-level mass of the deviation
    PotentialState pot;
    pot.phi_current = poisson_.solve(u);
    pot.phi_previous = phi_prev_;
    s.max_poisson_residual =
        std::max(s.max_poisson_residual, (wide_laplacian(pot.phi_current, grid_) + u).cwiseAbs().maxCoeff());
    const EntropyValue H = modified_entropy(D, pot, ledger_.delta, dt > 0.0 ? dt : cfg_.dt, ledger_, chi1_, chi2_,
                                            grid_, rho_, eq_.D0_delta);
    r.entropy = H.value;

    s.min_norm_lower_slack = std::min(s.min_norm_lower_slack, H.value - ledger_.c_delta_lower * n2);
    if (!H.partial) s.min_norm_upper_slack = std::min(s.min_norm_upper_slack, ledger_.C_delta_upper * n2 - H.value);
    if (linear_ && prev_entropy_full_) {
      const double slack = -dt * ledger_.K_delta * n2 - (H.value - prev_entropy_);
      s.min_dissipation_slack = std::min(s.min_dissipation_slack, slack);
    }
    if (linear_ && cfg_.flux != FluxType::Upwind) {
      const SpeciesPair P = project_pi(D, rho_, chi1_, chi2_, grid_);
      const double pnorm = weighted_norm(P, chi1_, chi2_, rho_, grid_);
      const SpatialField grad = discrete_gradient(pot.phi_current, Gradient::Centered, grid_);
      double slack = ledger_.C_P * ledger_.C_u_star * pnorm - norm_l2(grad, grid_);
      if (pot.phi_previous) {
        const SpatialField d = grad - discrete_gradient(*pot.phi_previous, Gradient::Centered, grid_);
        slack = std::min(slack, dt * norm_l2(m.J, grid_) + 2.0 * dt * moment_lambda_ * ledger_.C_u_star * pnorm -
                                    norm_l2(d, grid_));
      }
      s.min_phi_estimate_slack = std::min(s.min_phi_estimate_slack, slack);
    }
    prev_entropy_ = H.value;
    prev_entropy_full_ = !H.partial;
    phi_prev_ = pot.phi_current;

    const SpeciesPair full = physical(state);
    const BoundsReport b = check_maximum_principle(full, env_, rho_, chi1_, chi2_);
    r.bounds_pass = b.pass;
    if (!b.pass) ++s.bounds_violations;
    s.bounds_extremes.f_ratio_min = std::min(s.bounds_extremes.f_ratio_min, b.f_ratio_min);
    s.bounds_extremes.f_ratio_max = std::max(s.bounds_extremes.f_ratio_max, b.f_ratio_max);
    s.bounds_extremes.g_ratio_min = std::min(s.bounds_extremes.g_ratio_min, b.g_ratio_min);
    s.bounds_extremes.g_ratio_max = std::max(s.bounds_extremes.g_ratio_max, b.g_ratio_max);
    s.bounds_extremes.pass = s.bounds_extremes.pass && b.pass;
    s.max_mass_drift =
        std::max(s.max_mass_drift, std::abs(r.mass_difference - mass0_) / std::max(1.0, std::abs(mass0_)));

    result_.series.push_back(r);
    t_ = t;

    while (next_snapshot_ < cfg_.snapshots.size() &&
           t >= cfg_.snapshots[next_snapshot_] - 1e-9 * std::max(1.0, cfg_.snapshots[next_snapshot_])) {
      if (!dir_.empty()) {
        write_file(dir_ / ("snapshot_" + std::to_string(next_snapshot_) + ".csv"), snapshot_text(t, full, grid_));
      }
      ++next_snapshot_;
    }
  }

  const RunConfig& cfg_;
  RunResult& result_;
  GridSpec grid_;
  VelocityProfile chi1_, chi2_;
  PoissonSolver poisson_;
  bool linear_ = true;
  double rho_ = 1.0;
  EquilibriumData eq_;
  double lambda_ = 0.0;
  double moment_lambda_ = 0.0;
  FluxKind flux_;
  ConstantsLedger ledger_;
  BoundsEnvelope env_;
  SpeciesPair state_;
  double mass0_ = 0.0;
  double t_ = 0.0;
  double t_final_ = 0.0;
  std::size_t next_snapshot_ = 0;
  std::optional<SpatialField> phi_prev_;
  double prev_entropy_ = 0.0;
  bool prev_entropy_full_ = false;
  fs::path dir_;
};

void run_linear(Session& s, const RunConfig& cfg) {
  const double T = s.t_final();
  const auto full_steps = static_cast<long long>(std::floor(T / cfg.dt + 1e-9));
  const ImplicitOperator op = assemble_linear_operator(s.grid(), s.chi1(), s.chi2(), s.rho(), cfg.dt, s.flux());
  for (long long n = 1; n <= full_steps; ++n) {
    s.advance_to(step_linear(s.state(), op), static_cast<double>(n) * cfg.dt, cfg.dt, std::nullopt);
  }
  const double rest = T - static_cast<double>(full_steps) * cfg.dt;
  if (rest > 1e-12 * std::max(1.0, T)) {
    const ImplicitOperator last = assemble_linear_operator(s.grid(), s.chi1(), s.chi2(), s.rho(), rest, s.flux());
    s.advance_to(step_linear(s.state(), last), T, rest, std::nullopt);
  }
}

void run_nonlinear(Session& s, const RunConfig& cfg) {
  std::optional<Truncation> trunc;
  if (cfg.truncated) {
    trunc = Truncation{{cfg.envelope_fraction * s.rho(), cfg.envelope_fraction * s.rho()}, s.rho()};
  }
  NonlinearStepper stepper(s.grid(), s.chi1(), s.chi2(), s.flux(), trunc);
  AdaptiveController ctrl;
  ctrl.dt_current = cfg.dt;
  ctrl.dt_min = cfg.dt_min;
  ctrl.dt_max = cfg.dt_max;
  ctrl.growth_factor = cfg.growth_factor;
  ctrl.shrink_factor = cfg.shrink_factor;
  ctrl.accept_iteration_budget = cfg.accept_iterations;

  const double T = s.t_final();
  const double eps = 1e-12 * std::max(1.0, T);
  while (s.t() < T - eps) {
    double target = s.next_output_time();
    if (target <= s.t() + eps) target = T;
    const double cap = target - s.t();
    AdvanceResult step = adaptive_advance(s.state(), ctrl, cfg.newton, stepper, cap);
    ctrl = step.ctrl;
    s.add_rejections(static_cast<int>(step.rejected_dts.size()));
    const double t_new = std::abs(step.dt_used - cap) <= eps ? target : s.t() + step.dt_used;
    s.advance_to(std::move(step.F), t_new, step.dt_used, step.iterations);
  }
}

}  // namespace

RunResult run_experiment(const RunConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  RunResult result;
  result.config = cfg;
  Session session(cfg, result);
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  try {
    session.record_initial();
    if (cfg.model == ModelKind::Linear) {
      run_linear(session, cfg);
    } else {
      run_nonlinear(session, cfg);
    }
  } catch (const Error& e) {
    result.summary.wall_clock_seconds = elapsed();
    std::ostringstream ctx;
    ctx << "run aborted at t=" << fmt17(session.t()) << " (test " << cfg.test << ", " << to_string(cfg.flux)
        << "): " << e.what();
    session.finish("failed");
    throw Error(e.code(), ctx.str());
  }
  result.summary.wall_clock_seconds = elapsed();
  session.finish("ok");
  return result;
}

}  // namespace grkin
