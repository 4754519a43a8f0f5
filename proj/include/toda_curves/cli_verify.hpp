#pragma once

// Test-curve generation, run configuration, and the report/trajectory writers
// behind the toda_curve command-line tool.

#include "toda_curves/dynamics.hpp"
#include "toda_curves/flow_engine.hpp"
#include "toda_curves/fm_bracket.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace toda_curves {

// ---------------------------------------------------------------------------
// Generation.

/// Uniform double in [lo, hi) from the top 53 bits of a 64-bit draw; the
/// mapping is fixed so that a seed yields the same numbers on every platform.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

inline constexpr int kMaxGenerationAttempts = 100;

/// Every guard used downstream: g_k, u_k and g_{k-1} + g_k away from zero.
inline bool passes_guards(const CurveState& c) {
  const auto inv = compute_invariants(c);
  return inv.g_generic() && inv.u_generic() && inv.sums_generic();
}

/// Coordinates uniform in [−1, 1], redrawn until every genericity guard passes.
inline CurveState generate_curve(std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate_curve: n must be at least 1");
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    std::vector<double> x(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = uniform(rng, -1.0, 1.0);
      y[k] = uniform(rng, -1.0, 1.0);
    }
    CurveState c(std::move(x), std::move(y));
    if (passes_guards(c)) return c;
  }
  throw GenerationFailure("generate_curve: no nondegenerate curve after " +
                          std::to_string(kMaxGenerationAttempts) + " attempts (n = " + std::to_string(n) + ")");
}

/// A regular n-gon with each vertex's radius drawn from [0.6, 1.4] and its
/// angle moved by up to ±0.35 of the angular step. These curves keep a and b
/// of moderate size, so the Toda flow stays resolvable at dt = 1e-3.
inline CurveState jittered_polygon(std::size_t n, std::uint64_t seed) {
  if (n < 3) throw std::invalid_argument("jittered_polygon: n must be at least 3");
  std::mt19937_64 rng(seed);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    std::vector<double> x(n), y(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double theta = step * (static_cast<double>(k) + uniform(rng, -0.35, 0.35));
      const double r = uniform(rng, 0.6, 1.4);
      x[k] = r * std::cos(theta);
      y[k] = r * std::sin(theta);
    }
    CurveState c(std::move(x), std::move(y));
    if (passes_guards(c)) return c;
  }
  throw GenerationFailure("jittered_polygon: no nondegenerate curve after " +
                          std::to_string(kMaxGenerationAttempts) + " attempts");
}

/// a_k uniform in [0.5, 2], b_k uniform in [−1, 1]; not tied to any curve.
inline FMState random_fm_state(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FMState s;
  for (std::size_t k = 0; k < n; ++k) s.a.push_back(uniform(rng, 0.5, 2.0));
  for (std::size_t k = 0; k < n; ++k) s.b.push_back(uniform(rng, -1.0, 1.0));
  return s;
}

inline FlowCoefficients random_flow(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto f = FlowCoefficients::zero(n);
  for (auto& v : f.alpha) v = uniform(rng, -1.0, 1.0);
  for (auto& v : f.beta) v = uniform(rng, -1.0, 1.0);
  return f;
}

// ---------------------------------------------------------------------------
// Configuration.

/// Invalid command line or configuration; maps to exit status 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Command { Generate, Verify, Expand, Simulate, Invariants };
enum class OutputFormat { Json, Csv };

inline std::optional<Command> parse_command(const std::string& s) {
  if (s == "generate") return Command::Generate;
  if (s == "verify") return Command::Verify;
  if (s == "expand") return Command::Expand;
  if (s == "simulate") return Command::Simulate;
  if (s == "invariants") return Command::Invariants;
  return std::nullopt;
}

inline std::string to_string(Command c) {
  switch (c) {
    case Command::Generate: return "generate";
    case Command::Verify: return "verify";
    case Command::Expand: return "expand";
    case Command::Simulate: return "simulate";
    case Command::Invariants: return "invariants";
  }
  return "?";
}

struct RunConfig {
  Command command = Command::Verify;
  std::size_t n = 6;
  std::vector<double> lambdas{0.0, 1.0, -1.0};
  std::uint64_t seed = 0;
  /// Number of consecutive seeds the verify suite runs over.
  std::size_t trials = 10;
  /// Overrides every check's own tolerance when set.
  std::optional<double> tol;
  double t_end = 1.0;
  double dt = 1e-3;
  std::string out;
  OutputFormat format = OutputFormat::Json;
  /// "uniform", "hexagon" or "jitter"; empty picks the command's default.
  std::string preset;

  std::string effective_preset() const {
    if (!preset.empty()) return preset;
    return command == Command::Simulate ? "jitter" : "uniform";
  }

  void validate() const {
    if (n < 1) throw ConfigError("--n must be at least 1");
    if (tol && !(*tol > 0.0)) throw ConfigError("--tol must be positive");
    if (command == Command::Simulate) {
      if (!(dt > 0.0)) throw ConfigError("--dt must be positive");
      if (!(t_end >= 0.0)) throw ConfigError("--t-end must be non-negative");
      if (lambdas.empty()) throw ConfigError("simulate needs at least one --lambda");
    }
    if (trials < 1) throw ConfigError("--trials must be at least 1");
    const auto p = effective_preset();
    if (p != "uniform" && p != "hexagon" && p != "jitter") {
      throw ConfigError("unknown --preset '" + p + "' (expected uniform, hexagon or jitter)");
    }
    if (p == "jitter" && n < 3) throw ConfigError("--preset jitter needs --n >= 3");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["command"] = to_string(command);
    j["n"] = n;
    j["lambda"] = lambdas;
    j["seed"] = seed;
    j["trials"] = trials;
    j["tol"] = tol ? nlohmann::json(*tol) : nlohmann::json(nullptr);
    j["t_end"] = t_end;
    j["dt"] = dt;
    j["format"] = format == OutputFormat::Json ? "json" : "csv";
    j["preset"] = effective_preset();
    return j;
  }
};

/// The starting curve for a run. The hexagon preset always has six sites.
inline CurveState initial_curve(const RunConfig& cfg, std::uint64_t seed) {
  const auto p = cfg.effective_preset();
  if (p == "hexagon") return regular_polygon(6);
  if (p == "jitter") return jittered_polygon(cfg.n, seed);
  return generate_curve(cfg.n, seed);
}

// ---------------------------------------------------------------------------
// Logging, controlled by TODA_CURVE_LOG = quiet | info | debug (default info).

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

inline LogLevel log_level() {
  const char* env = std::getenv("TODA_CURVE_LOG");
  if (env == nullptr) return LogLevel::Info;
  const std::string v(env);
  if (v == "quiet") return LogLevel::Quiet;
  if (v == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

inline void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) <= static_cast<int>(log_level())) {
    std::cerr << (level == LogLevel::Debug ? "[debug] " : "[info] ") << msg << '\n';
  }
}

// ---------------------------------------------------------------------------
// Output.

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// Writes to a sibling temporary file and renames it over `path`.
inline void write_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f << content;
    if (!f.flush()) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, target);
}

/// One row of the verify report.
struct Check {
  std::string name;
  double value = 0.0;
  double tol = 0.0;
  bool pass = false;
};

inline nlohmann::json to_json(const Check& c) {
  return {{"name", c.name}, {"value", c.value}, {"tol", c.tol}, {"pass", c.pass}};
}

/// Outcome of one command: exit status and the text to write.
struct RunResult {
  int exit_code = 0;
  std::string output;
};

// Default tolerances of the verify suite.
inline constexpr double kTheorem2Tol = 1e-9;
inline constexpr double kGradientTol = 1e-6;
inline constexpr double kGradeTol = 1e-9;
inline constexpr double kJacobiTol = 1e-9;
inline constexpr double kZeroCurvatureTol = 1e-9;
inline constexpr double kRoundTripTol = 1e-12;
inline constexpr double kReconstructTol = 1e-10;
inline constexpr double kMonodromyTol = 1e-9;
inline constexpr double kFdStep = 1e-6;

/// max_k ‖∇_analytic f_k − ∇_fd f_k‖∞ / ‖∇_analytic f_k‖∞ over all 2N functions.
inline double gradient_oracle_error(const CurveState& c, double h = kFdStep) {
  const auto an = fm_gradients(c);
  const auto fd = fm_gradients_fd(c, h);
  double worst = 0.0;
  for (Eigen::Index r = 0; r < an.rows(); ++r) {
    const double norm = an.row(r).cwiseAbs().maxCoeff();
    worst = std::max(worst, (an.row(r) - fd.row(r)).cwiseAbs().maxCoeff() / norm);
  }
  return worst;
}

/// max over sites of |v_matrix(alpha_beta_from_v(v))_{1j} − v_{1j}| / max(1, |v_{1j}|).
inline double alpha_beta_roundtrip_error(const CurveState& c, const VMatrixEntries& v) {
  const auto inv = compute_invariants(c);
  const auto f = alpha_beta_from_v(inv, v);
  double worst = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const Mat2 m = v_matrix(inv, f, static_cast<long long>(k));
    worst = std::max({worst, std::abs(m(0, 0) - v.v11[k]) / std::max(1.0, std::abs(v.v11[k])),
                      std::abs(m(0, 1) - v.v12[k]) / std::max(1.0, std::abs(v.v12[k]))});
  }
  return worst;
}

/// Max point error of rebuilding c from its invariants and first two points.
inline double reconstruction_error(const CurveState& c) {
  const auto pts = reconstruct_curve(compute_invariants(c), c.point(0), c.point(1), c.size());
  double worst = 0.0;
  for (std::size_t k = 0; k <= c.size(); ++k) {
    worst = std::max(worst, (pts[k] - c.point(static_cast<long long>(k))).cwiseAbs().maxCoeff());
  }
  return worst;
}

inline RunResult run_verify(const RunConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.effective_preset() == "hexagon" ? 6 : cfg.n;
  if (n <= 3) {
    throw ConfigError("verify runs the bracket checks, whose closed-form relations only make sense for N > 3 (got N = " +
                      std::to_string(n) + ")");
  }
  const auto tol_or = [&](double dflt) { return cfg.tol.value_or(dflt); };

  double thm2 = 0.0, grad = 0.0, fit = 0.0, rebuild = 0.0, zc = 0.0, zc_zero = 0.0, rt = 0.0, rec = 0.0,
         mono = 0.0;
  double jac_p1 = 0.0, jac_p2 = 0.0, jac_p3 = 0.0, jac_half = 0.0, jac_two = 0.0;
  const auto structure = closed_form_structure(n);
  const auto pencil_half = structure.pencil(0.5);
  const auto pencil_two = structure.pencil(2.0);

  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const std::uint64_t seed = cfg.seed + t;
    const auto c = initial_curve(cfg, seed);
    log(LogLevel::Debug, "verify: seed " + std::to_string(seed));
    for (double lam : cfg.lambdas) thm2 = std::max(thm2, verify_theorem2(c, lam, tol_or(kTheorem2Tol)).max_rel_deviation);
    grad = std::max(grad, gradient_oracle_error(c));
    const auto graded = lambda_grade(c, tol_or(kGradeTol));
    fit = std::max(fit, graded.fit_deviation);
    rebuild = std::max(rebuild, graded.reconstruction_deviation);

    const auto z = random_fm_state(n, seed).coordinates();
    jac_p1 = std::max(jac_p1, jacobi_residual(structure.p1, z));
    jac_p2 = std::max(jac_p2, jacobi_residual(structure.p2, z));
    jac_p3 = std::max(jac_p3, jacobi_residual(structure.p3, z));
    jac_half = std::max(jac_half, jacobi_residual(pencil_half, z));
    jac_two = std::max(jac_two, jacobi_residual(pencil_two, z));

    zc = std::max(zc, zero_curvature_residual(c, random_flow(n, seed), 0.0));
    zc_zero = std::max(zc_zero, zero_curvature_residual(c, FlowCoefficients::zero(n), 0.0));
    const auto f = random_flow(n, seed ^ 0x9e3779b97f4a7c15ULL);
    rt = std::max(rt, alpha_beta_roundtrip_error(c, {f.alpha, f.beta}));
    rec = std::max(rec, reconstruction_error(c));
    mono = std::max(mono, max_abs(monodromy(lax_matrices(compute_invariants(c))) - Mat2::Identity()));
  }

  std::vector<Check> checks;
  auto add = [&](std::string name, double value, double tol) {
    checks.push_back({std::move(name), value, tol, value < tol});
  };
  add("theorem2_equivalence", thm2, tol_or(kTheorem2Tol));
  add("gradient_oracle", grad, tol_or(kGradientTol));
  add("lambda_grade_fit", fit, tol_or(kGradeTol));
  add("lambda_grade_reconstruction", rebuild, tol_or(kGradeTol));
  add("jacobi_P1", jac_p1, tol_or(kJacobiTol));
  add("jacobi_P2", jac_p2, tol_or(kJacobiTol));
  add("jacobi_P3", jac_p3, tol_or(kJacobiTol));
  add("jacobi_pencil_t0.5", jac_half, tol_or(kJacobiTol));
  add("jacobi_pencil_t2", jac_two, tol_or(kJacobiTol));
  add("zero_curvature", zc, tol_or(kZeroCurvatureTol));
  checks.push_back({"zero_curvature_trivial_flow", zc_zero, 0.0, zc_zero == 0.0});
  add("alpha_beta_roundtrip", rt, tol_or(kRoundTripTol));
  add("reconstruction_roundtrip", rec, tol_or(kReconstructTol));
  add("monodromy_identity", mono, tol_or(kMonodromyTol));

  bool all = true;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks) {
    all = all && c.pass;
    arr.push_back(to_json(c));
    log(LogLevel::Info, (c.pass ? "PASS " : "FAIL ") + c.name + " = " + format_double(c.value));
  }
  nlohmann::json report{{"config", cfg.to_json()}, {"checks", arr}, {"pass", all}};
  return {all ? 0 : 1, report.dump(2) + "\n"};
}

inline std::string trace_column_name(double lam) { return "trT(" + format_double(lam) + ")"; }

inline RunResult run_simulate(const RunConfig& cfg) {
  cfg.validate();
  const auto c = initial_curve(cfg, cfg.seed);
  const std::size_t n = c.size();
  const int sign = orientation(c);
  const auto lambdas = cfg.lambdas;
  Monitor<FMState> traces = [&](const FMState& s) {
    std::vector<double> v;
    for (double lam : lambdas) v.push_back(spectral_trace(s, lam, sign));
    return v;
  };

  const auto traj = integrate<FMState>(fm_map(c, 0.0), toda_field_ab(), cfg.t_end, cfg.dt, traces);

  if (cfg.format == OutputFormat::Csv) {
    std::ostringstream os;
    os << "t";
    for (std::size_t k = 0; k < n; ++k) os << ",a_" << k;
    for (std::size_t k = 0; k < n; ++k) os << ",b_" << k;
    for (double lam : lambdas) os << ',' << trace_column_name(lam);
    os << '\n';
    for (std::size_t i = 0; i < traj.times.size(); ++i) {
      os << format_double(traj.times[i]);
      for (double v : traj.states[i].a) os << ',' << format_double(v);
      for (double v : traj.states[i].b) os << ',' << format_double(v);
      for (double v : traj.invariant_log[i]) os << ',' << format_double(v);
      os << '\n';
    }
    return {0, os.str()};
  }

  nlohmann::json j;
  j["config"] = cfg.to_json();
  j["x"] = c.xs();
  j["y"] = c.ys();
  j["t"] = traj.times;
  nlohmann::json a = nlohmann::json::array(), b = nlohmann::json::array();
  for (const auto& s : traj.states) {
    a.push_back(s.a);
    b.push_back(s.b);
  }
  j["a"] = a;
  j["b"] = b;
  j["trT"] = traj.invariant_log;
  if (n > 3) {
    const auto r = consistency_check(c, 0.0, cfg.t_end, cfg.dt);
    j["consistency"] = {{"max_deviation", r.max_deviation}, {"min_rank", r.min_rank},
                        {"max_rank", r.max_rank}, {"max_solver_residual", r.max_solver_residual}};
  }
  return {0, j.dump(2) + "\n"};
}

inline RunResult run_generate(const RunConfig& cfg) {
  cfg.validate();
  const auto c = initial_curve(cfg, cfg.seed);
  if (cfg.format == OutputFormat::Csv) {
    std::ostringstream os;
    os << "k,x,y\n";
    for (std::size_t k = 0; k < c.size(); ++k) os << k << ',' << format_double(c.xs()[k]) << ',' << format_double(c.ys()[k]) << '\n';
    return {0, os.str()};
  }
  nlohmann::json j{{"config", cfg.to_json()}, {"n", c.size()}, {"x", c.xs()}, {"y", c.ys()}};
  return {0, j.dump(2) + "\n"};
}

inline RunResult run_invariants(const RunConfig& cfg) {
  cfg.validate();
  const auto c = initial_curve(cfg, cfg.seed);
  const auto inv = compute_invariants(c);
  const auto fm = fm_map(c, 0.0);
  const auto traces = spectral_invariants(c, cfg.lambdas);
  const Mat2 t = monodromy(lax_matrices(inv));

  if (cfg.format == OutputFormat::Csv) {
    std::ostringstream os;
    os << "k,x,y,g,u,a,b\n";
    for (std::size_t k = 0; k < c.size(); ++k) {
      os << k << ',' << format_double(c.xs()[k]) << ',' << format_double(c.ys()[k]) << ',' << format_double(inv.g[k])
         << ',' << format_double(inv.u[k]) << ',' << format_double(fm.a[k]) << ',' << format_double(fm.b[k]) << '\n';
    }
    return {0, os.str()};
  }
  nlohmann::json tr = nlohmann::json::array();
  for (std::size_t i = 0; i < traces.size(); ++i) tr.push_back({{"lambda", cfg.lambdas[i]}, {"value", traces[i]}});
  nlohmann::json j{{"config", cfg.to_json()},
                   {"x", c.xs()},
                   {"y", c.ys()},
                   {"g", inv.g},
                   {"u", inv.u},
                   {"a", fm.a},
                   {"b", fm.b},
                   {"monodromy", {{t(0, 0), t(0, 1)}, {t(1, 0), t(1, 1)}}},
                   {"trT", tr}};
  return {0, j.dump(2) + "\n"};
}

inline RunResult run_expand(const RunConfig& cfg) {
  cfg.validate();
  const auto c = initial_curve(cfg, cfg.seed);
  if (c.size() <= 3) {
    throw ConfigError("expand grades the bracket relations, which only make sense for N > 3");
  }
  const auto g = lambda_grade(c, cfg.tol.value_or(kGradeTol));
  const std::size_t n = c.size();

  if (cfg.format == OutputFormat::Csv) {
    std::ostringstream os;
    os << "p,q,P1,P2,P3\n";
    for (std::size_t i = 0; i < 2 * n; ++i) {
      for (std::size_t j = 0; j < 2 * n; ++j) {
        if (g.closed_p1(i, j) == 0.0 && g.closed_p2(i, j) == 0.0 && g.closed_p3(i, j) == 0.0) continue;
        os << to_string(VarLabel::from_flat(i, n)) << ',' << to_string(VarLabel::from_flat(j, n)) << ','
           << format_double(g.p1(i, j)) << ',' << format_double(g.p2(i, j)) << ',' << format_double(g.p3(i, j)) << '\n';
      }
    }
    return {g.pass ? 0 : 1, os.str()};
  }

  auto entries = [&](const Eigen::MatrixXd& fitted, const Eigen::MatrixXd& closed) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < 2 * n; ++i) {
      for (std::size_t j = 0; j < 2 * n; ++j) {
        if (closed(i, j) == 0.0) continue;
        arr.push_back({{"p", to_string(VarLabel::from_flat(i, n))},
                       {"q", to_string(VarLabel::from_flat(j, n))},
                       {"fitted", fitted(i, j)},
                       {"closed_form", closed(i, j)}});
      }
    }
    return arr;
  };
  nlohmann::json j{{"config", cfg.to_json()},
                   {"a", g.state.a},
                   {"b", g.state.b},
                   {"P1", entries(g.p1, g.closed_p1)},
                   {"P2", entries(g.p2, g.closed_p2)},
                   {"P3", entries(g.p3, g.closed_p3)},
                   {"fit_deviation", g.fit_deviation},
                   {"reconstruction_deviation", g.reconstruction_deviation},
                   {"tol", g.tol},
                   {"pass", g.pass}};
  return {g.pass ? 0 : 1, j.dump(2) + "\n"};
}

/// Dispatches on cfg.command. Configuration problems surface as ConfigError.
inline RunResult run(const RunConfig& cfg) {
  try {
    switch (cfg.command) {
      case Command::Generate: return run_generate(cfg);
      case Command::Verify: return run_verify(cfg);
      case Command::Expand: return run_expand(cfg);
      case Command::Simulate: return run_simulate(cfg);
      case Command::Invariants: return run_invariants(cfg);
    }
  } catch (const UnsupportedSize& e) {
    throw ConfigError(e.what());
  }
  return {2, ""};
}

}  // namespace toda_curves
