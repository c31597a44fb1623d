// SPDX-License-Identifier: Apache-2.0

#include "fmlab/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "fmlab/errors.hpp"
#include "fmlab/metrics.hpp"

namespace fmlab {

namespace {

// Stream ids: each stage draws from its own counter-based stream.
enum Stream : std::uint64_t {
  kLambda = 1,
  kRadius0,
  kRadius1,
  kLipschitz,
  kEpsilon,
  kStarts,
  kTarget,
  kCalibration,
  kGrad,
  kTailCheck,
  kEndpointLambda,
  kW2,
  kScaling,
};

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

double number(const Json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

double number_or(const Json& j, const char* key, const std::string& path, double fallback) {
  return j.contains(key) ? number(j.at(key), path + "." + key) : fallback;
}

std::size_t count_or(const Json& j, const char* key, const std::string& path, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) bad(path + "." + key, "expected a count");
  return v.get<std::size_t>();
}

std::vector<double> numbers(const Json& j, const std::string& path) {
  if (!j.is_array()) bad(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

Vec vector_of(const Json& j, const std::string& path) {
  const std::vector<double> v = numbers(j, path);
  if (v.empty()) bad(path, "empty vector");
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ScheduleSpec::Fn parse_fn(const Json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("fn")) bad(path, "expected {\"fn\": name, \"params\": [...]}");
  ScheduleSpec::Fn f;
  f.id = j.at("fn").get<std::string>();
  if (j.contains("params")) f.params = numbers(j.at("params"), path + ".params");
  return f;
}

ScheduleSpec parse_schedule(const Json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("kind")) bad(path, "expected an object with 'kind'");
  ScheduleSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.radius = number_or(j, "R", path, s.radius);
  s.delta = number_or(j, "delta", path, s.delta);
  s.gamma0 = number_or(j, "gamma0", path, s.gamma0);
  s.gamma1 = number_or(j, "gamma1", path, s.gamma1);
  if (s.kind == "custom") {
    for (const char* key : {"alpha", "beta", "gamma"}) {
      if (!j.contains(key)) bad(path, std::string("custom schedule needs '") + key + "'");
    }
    s.alpha = parse_fn(j.at("alpha"), path + ".alpha");
    s.beta = parse_fn(j.at("beta"), path + ".beta");
    s.gamma = parse_fn(j.at("gamma"), path + ".gamma");
  }
  return s;
}

TimeProfile parse_profile(const Json& j, const std::string& path) {
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") return TimeProfile::constant();
  if (kind == "sin_pi") return TimeProfile::sin_pi();
  if (kind == "window") {
    try {
      return TimeProfile::window(number_or(j, "lo", path, 0.0), number_or(j, "hi", path, 1.0));
    } catch (const DomainError& e) {
      bad(path, e.what());
    }
  }
  bad(path + ".kind", "unknown time profile '" + kind + "'");
}

ProbeSpec parse_probes(const Json& j, const std::string& path) {
  ProbeSpec p;
  if (j.contains("strategies")) {
    p.strategies.clear();
    for (const auto& s : j.at("strategies")) {
      const std::string name = s.get<std::string>();
      if (name == "grid") {
        p.strategies.push_back(ProbeStrategy::Grid);
      } else if (name == "sampled") {
        p.strategies.push_back(ProbeStrategy::SampledFromNoisy);
      } else if (name == "ridge") {
        p.strategies.push_back(ProbeStrategy::AdversarialRidge);
      } else {
        bad(path + ".strategies", "unknown strategy '" + name + "'");
      }
    }
  }
  p.n_samples = count_or(j, "n_samples", path, p.n_samples);
  p.grid_per_axis = static_cast<int>(count_or(j, "grid_per_axis", path, p.grid_per_axis));
  if (j.contains("ridge_fractions")) p.ridge_fractions = numbers(j.at("ridge_fractions"), path + ".ridge_fractions");
  return p;
}

SolverSpec parse_solver(const Json& j, const std::string& path) {
  const std::string kind = j.value("kind", "rk45");
  if (kind == "rk45") {
    return SolverSpec::rk45(number_or(j, "rtol", path, 1e-8), number_or(j, "atol", path, 1e-8));
  }
  if (kind == "rk4") {
    const double h = number_or(j, "h", path, 1e-3);
    if (!(h > 0.0 && h <= 1.0)) bad(path + ".h", "step must lie in (0, 1]");
    return SolverSpec::rk4(h);
  }
  bad(path + ".kind", "unknown solver '" + kind + "'");
}

std::vector<double> uniform_grid(std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = n == 1 ? 0.0 : static_cast<double>(k) / (n - 1);
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json vec_json(const Vec& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

}  // namespace

Schedule ScheduleSpec::build() const {
  const std::string path = "schedule";
  if (kind == "generic_concave") {
    if (!(radius > 0.0)) bad(path + ".R", "must be > 0");
    if (!(delta > 0.0)) bad(path + ".delta", "gamma_0 = gamma_1 = 0; the boundary must be relaxed (delta > 0)");
    return Schedule::generic_concave(radius, delta);
  }
  if (kind == "vp") {
    if (!(radius > 0.0)) bad(path + ".R", "must be > 0");
    if (!(delta > 0.0 && delta < std::numbers::pi / 2)) {
      bad(path + ".delta", "gamma_1 = 0 unless 0 < delta < pi/2; the boundary must be relaxed");
    }
    return Schedule::vp(radius, delta);
  }
  if (kind == "ve") {
    if (!(gamma0 > 0.0)) bad(path + ".gamma0", "gamma_0 must be > 0");
    if (!(gamma1 > 0.0)) bad(path + ".gamma1", "gamma_1 must be > 0 (relaxed boundary)");
    if (!(gamma0 > gamma1)) bad(path, "VE needs gamma0 > gamma1");
    return Schedule::ve(gamma0, gamma1);
  }
  if (kind == "custom") {
    try {
      Schedule s = Schedule::custom(named_coefficient(alpha.id, alpha.params),
                                    named_coefficient(beta.id, beta.params),
                                    named_coefficient(gamma.id, gamma.params), "custom");
      if (!(s.gamma(0.0) > 0.0)) bad(path + ".gamma", "gamma_0 must be > 0");
      if (!(s.gamma(1.0) > 0.0)) bad(path + ".gamma", "gamma_1 must be > 0");
      s.validate();
      return s;
    } catch (const DomainError& e) {
      bad(path, e.what());
    }
  }
  bad(path + ".kind", "unknown schedule kind '" + kind + "'");
}

GaussianMixture parse_mixture(const Json& j, const std::string& path) {
  if (!j.is_object() || !j.contains("means")) bad(path, "expected an object with 'means'");
  std::vector<Vec> means;
  const Json& jm = j.at("means");
  if (!jm.is_array() || jm.empty()) bad(path + ".means", "expected a non-empty array");
  for (std::size_t k = 0; k < jm.size(); ++k) means.push_back(vector_of(jm[k], path + ".means[" + std::to_string(k) + "]"));
  std::vector<double> weights;
  if (j.contains("weights")) {
    weights = numbers(j.at("weights"), path + ".weights");
  } else {
    weights.assign(means.size(), 1.0 / static_cast<double>(means.size()));
  }
  try {
    if (j.contains("covariances")) {
      std::vector<Mat> covs;
      const Json& jc = j.at("covariances");
      for (std::size_t k = 0; k < jc.size(); ++k) {
        const std::string p = path + ".covariances[" + std::to_string(k) + "]";
        const Eigen::Index d = means.front().size();
        Mat m(d, d);
        if (!jc[k].is_array() || static_cast<Eigen::Index>(jc[k].size()) != d) bad(p, "expected d rows");
        for (Eigen::Index r = 0; r < d; ++r) {
          const Vec row = vector_of(jc[k][r], p);
          if (row.size() != d) bad(p, "expected d columns");
          m.row(r) = row.transpose();
        }
        covs.push_back(m);
      }
      return GaussianMixture(weights, means, covs);
    }
    std::vector<double> sigmas;
    if (j.contains("sigmas")) {
      sigmas = numbers(j.at("sigmas"), path + ".sigmas");
    } else if (j.contains("sigma")) {
      sigmas.assign(means.size(), number(j.at("sigma"), path + ".sigma"));
    } else {
      bad(path, "needs 'sigma', 'sigmas' or 'covariances'");
    }
    return GaussianMixture(weights, means, sigmas);
  } catch (const DomainError& e) {
    bad(path, e.what());
  }
}

Json to_json(const GaussianMixture& gm) {
  Json j;
  j["weights"] = gm.weights();
  Json means = Json::array();
  for (std::size_t i = 0; i < gm.size(); ++i) means.push_back(vec_json(gm.mean(i)));
  j["means"] = means;
  if (gm.all_isotropic()) {
    std::vector<double> s;
    for (std::size_t i = 0; i < gm.size(); ++i) s.push_back(std::sqrt(gm.isotropic_variance(i)));
    j["sigmas"] = s;
  } else {
    Json covs = Json::array();
    for (std::size_t i = 0; i < gm.size(); ++i) {
      Json rows = Json::array();
      for (Eigen::Index r = 0; r < gm.dim(); ++r) rows.push_back(vec_json(gm.covariance(i).row(r).transpose()));
      covs.push_back(rows);
    }
    j["covariances"] = covs;
  }
  return j;
}

Json to_json(const BoundReport& r) {
  Json j;
  j["theorem"] = to_string(r.theorem);
  j["instance"] = r.instance;
  j["lhs_measured"] = r.lhs_measured;
  j["rhs_computed"] = r.rhs_computed;
  j["slack"] = r.slack;
  j["pass"] = r.pass;
  Json c = Json::object();
  for (const auto& [k, v] : r.constituents) c[k] = v;
  j["constituents"] = c;
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

ExperimentConfig parse_config(const Json& doc) {
  if (!doc.is_object()) bad("$", "config must be a JSON object");
  static const std::set<std::string> known{
      "name", "seed", "endpoints", "schedule", "perturbation", "n_particles", "n_mc", "solver",
      "t_grid", "probes", "tau_count", "support_quantile", "support_samples", "marginal_checks",
      "tail_check", "grad_points", "w2_samples"};
  for (const auto& [key, _] : doc.items()) {
    if (!known.count(key)) bad(key, "unknown key");
  }
  ExperimentConfig cfg;
  cfg.echo = doc;
  cfg.name = doc.value("name", cfg.name);
  if (doc.contains("seed")) cfg.seed = doc.at("seed").get<std::uint64_t>();
  if (!doc.contains("endpoints")) bad("endpoints", "missing");
  const Json& ep = doc.at("endpoints");
  if (!ep.contains("pi1")) bad("endpoints.pi1", "missing");
  cfg.pi1 = parse_mixture(ep.at("pi1"), "endpoints.pi1");
  cfg.pi0 = ep.contains("pi0") ? parse_mixture(ep.at("pi0"), "endpoints.pi0")
                               : GaussianMixture::standard_normal(cfg.pi1.dim());
  if (cfg.pi0.dim() != cfg.pi1.dim()) bad("endpoints", "pi0 and pi1 differ in dimension");
  if (cfg.pi0.size() * cfg.pi1.size() > 10'000) bad("endpoints", "K0 * K1 exceeds 1e4");
  const Eigen::Index d = cfg.pi1.dim();

  if (!doc.contains("schedule")) bad("schedule", "missing");
  cfg.schedule = parse_schedule(doc.at("schedule"), "schedule");
  cfg.schedule.build();

  PerturbationSpec& p = cfg.perturbation;
  p.frequency = Vec::Ones(d);
  p.direction = Vec::Unit(d, 0);
  if (doc.contains("perturbation")) {
    const Json& jp = doc.at("perturbation");
    const std::string path = "perturbation";
    if (jp.contains("amplitudes")) p.amplitudes = numbers(jp.at("amplitudes"), path + ".amplitudes");
    if (jp.contains("epsilon_targets")) {
      p.epsilon_targets = numbers(jp.at("epsilon_targets"), path + ".epsilon_targets");
    }
    if (jp.contains("frequency")) p.frequency = vector_of(jp.at("frequency"), path + ".frequency");
    if (jp.contains("direction")) p.direction = vector_of(jp.at("direction"), path + ".direction");
    p.phase = number_or(jp, "phase", path, 0.0);
    if (jp.contains("profile")) p.profile = parse_profile(jp.at("profile"), path + ".profile");
    for (double a : p.amplitudes) {
      if (!(a >= 0.0)) bad(path + ".amplitudes", "amplitudes must be >= 0");
    }
    for (double e : p.epsilon_targets) {
      if (!(e > 0.0)) bad(path + ".epsilon_targets", "targets must be > 0");
    }
    if (p.frequency.size() != d) bad(path + ".frequency", "dimension mismatch");
    if (p.direction.size() != d || !(p.direction.norm() > 0.0)) {
      bad(path + ".direction", "must be a non-zero vector of dimension d");
    }
  }

  cfg.n_particles = count_or(doc, "n_particles", "n_particles", cfg.n_particles);
  cfg.n_mc = count_or(doc, "n_mc", "n_mc", cfg.n_mc);
  if (cfg.n_particles < 2) bad("n_particles", "must be >= 2");
  if (cfg.n_mc < 1000) bad("n_mc", "must be >= 1000");
  if (doc.contains("solver")) cfg.solver = parse_solver(doc.at("solver"), "solver");
  if (doc.contains("t_grid")) {
    const Json& jt = doc.at("t_grid");
    if (jt.is_number_integer()) {
      if (jt.get<long long>() < 2) bad("t_grid", "needs >= 2 nodes");
      cfg.t_grid = uniform_grid(jt.get<std::size_t>());
    } else {
      cfg.t_grid = numbers(jt, "t_grid");
    }
  } else {
    cfg.t_grid = uniform_grid(21);
  }
  for (double t : cfg.t_grid) {
    if (t < 0.0 || t > 1.0) bad("t_grid", "times must lie in [0, 1]");
  }
  if (!std::is_sorted(cfg.t_grid.begin(), cfg.t_grid.end())) bad("t_grid", "must be ascending");
  if (doc.contains("probes")) cfg.probes = parse_probes(doc.at("probes"), "probes");
  cfg.tau_count = static_cast<int>(count_or(doc, "tau_count", "tau_count", 33));
  if (cfg.tau_count < 1) bad("tau_count", "must be >= 1");
  cfg.support_quantile = number_or(doc, "support_quantile", "support_quantile", 0.999);
  if (!(cfg.support_quantile >= 0.9 && cfg.support_quantile < 1.0)) {
    bad("support_quantile", "must satisfy 0.9 <= q < 1");
  }
  cfg.support_samples = count_or(doc, "support_samples", "support_samples", cfg.support_samples);
  if (cfg.support_samples < 1000) bad("support_samples", "must be >= 1000");
  if (doc.contains("marginal_checks")) cfg.marginal_checks = numbers(doc.at("marginal_checks"), "marginal_checks");
  if (doc.contains("tail_check")) {
    const Json& ja = doc.at("tail_check");
    if (ja.contains("c")) cfg.tail_check_c = numbers(ja.at("c"), "tail_check.c");
    if (ja.contains("tau")) cfg.tail_check_tau = number(ja.at("tau"), "tail_check.tau");
    cfg.tail_check_samples = count_or(ja, "samples", "tail_check", cfg.tail_check_samples);
    for (double c : cfg.tail_check_c) {
      if (c < 1.0) bad("tail_check.c", "c must be >= 1");
    }
  }
  cfg.grad_points = count_or(doc, "grad_points", "grad_points", cfg.grad_points);
  cfg.w2_samples = count_or(doc, "w2_samples", "w2_samples", cfg.w2_samples);
  if (cfg.w2_samples < 2) bad("w2_samples", "must be >= 2");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json doc;
  try {
    doc = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(doc);
}

Json RunReport::to_json() const {
  Json j;
  j["command"] = command;
  j["pass"] = pass;
  j["config"] = config;
  for (const auto& [k, v] : body.items()) j[k] = v;
  Json b = Json::array();
  for (const auto& r : bounds) b.push_back(fmlab::to_json(r));
  j["bounds"] = b;
  j["timing"] = {{"wall_clock_seconds", wall_clock_seconds}};
  return j;
}

namespace {

void write_csv(const CsvTable& t, const std::filesystem::path& dir) {
  std::ofstream os(dir / t.file);
  if (!os) throw ConfigError("cannot write " + (dir / t.file).string());
  for (std::size_t k = 0; k < t.columns.size(); ++k) os << (k ? "," : "") << t.columns[k];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) os << (k ? "," : "") << row[k];
    os << '\n';
  }
}

CsvTable bounds_table(const std::vector<BoundReport>& bounds) {
  CsvTable t;
  t.file = "bounds.csv";
  t.columns = {"theorem", "instance", "lhs_measured", "rhs_computed", "slack", "pass"};
  t.descriptions = {"bound identifier", "instance label within the run",
                    "measured left-hand side", "right-hand side from constituents",
                    "numeric slack max(1e-6, 1e-3 rhs)", "1 if lhs <= rhs + slack"};
  for (const auto& r : bounds) {
    t.rows.push_back({to_string(r.theorem), r.instance, num(r.lhs_measured), num(r.rhs_computed),
                      num(r.slack), r.pass ? "1" : "0"});
  }
  return t;
}

}  // namespace

void write_report(const RunReport& report, const std::string& dir) {
  const std::filesystem::path out(dir);
  std::filesystem::create_directories(out);
  {
    std::ofstream os(out / "report.json");
    if (!os) throw ConfigError("cannot write " + (out / "report.json").string());
    os << report.to_json().dump(2) << '\n';
  }
  std::vector<CsvTable> tables = report.tables;
  tables.push_back(bounds_table(report.bounds));
  Json schema = Json::object();
  for (const auto& t : tables) {
    write_csv(t, out);
    Json cols = Json::array();
    for (std::size_t k = 0; k < t.columns.size(); ++k) {
      cols.push_back({{"name", t.columns[k]},
                      {"description", k < t.descriptions.size() ? t.descriptions[k] : ""}});
    }
    schema[t.file] = cols;
  }
  std::ofstream os(out / "schema.json");
  os << schema.dump(2) << '\n';
}

std::optional<double> fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < std::min(x.size(), y.size()); ++k) {
    if (x[k] > 0.0 && y[k] > 0.0) {
      lx.push_back(std::log(x[k]));
      ly.push_back(std::log(y[k]));
    }
  }
  if (lx.size() < 2) return std::nullopt;
  const double n = static_cast<double>(lx.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    mx += lx[k] / n;
    my += ly[k] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < lx.size(); ++k) {
    sxy += (lx[k] - mx) * (ly[k] - my);
    sxx += (lx[k] - mx) * (lx[k] - mx);
  }
  if (sxx == 0.0) return std::nullopt;
  return sxy / sxx;
}

GradCheckResult gradient_suite(const ExactVelocityField& f, std::size_t n, RngStream& rng,
                               double t_lo, double t_hi) {
  GradCheckResult out;
  out.points = n;
  const Eigen::Index d = f.dim();
  const bool pfode = f.schedule().alpha_vanishes();
  if (pfode) out.max_pfode_discrepancy = 0.0;
  auto rel = [](const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); };
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t_lo + (t_hi - t_lo) * rng.uniform();
    const Vec x = draw_interpolant(f.pi0(), f.pi1(), f.schedule().eval(t), rng).xt;
    const double h = 1e-5 * (1.0 + x.norm());
    Mat jv(d, d), j0(d, d), j1(d, d);
    for (Eigen::Index c = 0; c < d; ++c) {
      Vec xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      jv.col(c) = (f.velocity(xp, t) - f.velocity(xm, t)) / (2.0 * h);
      j0.col(c) = (f.conditional_mean(xp, t, Endpoint::X0) - f.conditional_mean(xm, t, Endpoint::X0)) / (2.0 * h);
      j1.col(c) = (f.conditional_mean(xp, t, Endpoint::X1) - f.conditional_mean(xm, t, Endpoint::X1)) / (2.0 * h);
    }
    const Mat j = f.velocity_jacobian(x, t);
    out.max_velocity_jacobian_error = std::max(out.max_velocity_jacobian_error, rel(jv, j));
    out.max_mean_x0_jacobian_error =
        std::max(out.max_mean_x0_jacobian_error, rel(j0, f.conditional_mean_jacobian(x, t, Endpoint::X0)));
    out.max_mean_x1_jacobian_error =
        std::max(out.max_mean_x1_jacobian_error, rel(j1, f.conditional_mean_jacobian(x, t, Endpoint::X1)));
    if (pfode) {
      out.max_pfode_discrepancy =
          std::max(*out.max_pfode_discrepancy, rel(f.velocity_jacobian_pfode(x, t), j));
    }
  }
  out.pass = out.max_velocity_jacobian_error <= 1e-5 && out.max_mean_x0_jacobian_error <= 1e-5 &&
             out.max_mean_x1_jacobian_error <= 1e-5 &&
             (!pfode || *out.max_pfode_discrepancy <= 1e-8);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

RunReport start_report(const std::string& command, const ExperimentConfig& cfg) {
  RunReport r;
  r.command = command;
  r.config = cfg.echo;
  r.config["seed"] = cfg.seed;
  return r;
}

void finish(RunReport& r, Clock::time_point t0) {
  for (const auto& b : r.bounds) r.pass = r.pass && b.pass;
  r.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
}

PerturbedVelocityField make_perturbed(const std::shared_ptr<const ExactVelocityField>& base,
                                      const PerturbationSpec& p, double amplitude) {
  return PerturbedVelocityField(base, amplitude, p.frequency, p.phase, p.direction, p.profile);
}

// Amplitudes to run: explicit ones, or those hitting each epsilon target.
std::vector<double> resolve_amplitudes(const std::shared_ptr<const ExactVelocityField>& base,
                                       const PerturbationSpec& p) {
  if (p.epsilon_targets.empty()) return p.amplitudes;
  const double unit = std::sqrt(l2_error_closed_form(make_perturbed(base, p, 1.0)));
  if (!(unit > 0.0)) throw ConfigError("perturbation: unit amplitude gives zero epsilon");
  std::vector<double> out;
  for (double e : p.epsilon_targets) out.push_back(e / unit);
  return out;
}

TransportResult w2_auto(const PointSet& a, const PointSet& b) {
  if (static_cast<std::size_t>(a.cols()) <= kExactAssignmentCap) return w2_empirical(a, b);
  return w2_sinkhorn(a, b);
}

Json transport_json(const TransportResult& t) {
  Json j;
  j["w2"] = t.w2;
  j["method"] = to_string(t.method);
  j["n"] = t.n;
  if (t.method == TransportMethod::Sinkhorn) {
    j["reg"] = t.reg;
    j["caveat"] = t.caveat;
  }
  return j;
}

Json radius_json(const SupportRadius& r) {
  return {{"radius", r.radius},       {"quantile", r.quantile}, {"ci_low", r.ci_low},
          {"ci_high", r.ci_high},     {"tail_mass", r.tail_mass}, {"n_samples", r.n_samples}};
}

struct Regularity {
  double lambda = 1.0;
  std::string source;
  double lambda_hat_max = 0.0;
  std::optional<double> cert;
};

// Regularity of the interpolant signal law: the per-time certificate when
// every marginal has one, else the probe-sup (a lower bound).
Regularity interpolant_lambda(const ExperimentConfig& cfg, const Schedule& s, RunReport& report) {
  RngStream rng(cfg.seed, kLambda);
  const auto profile = interpolant_marginal_regularity(cfg.pi0, cfg.pi1, s, cfg.t_grid, cfg.probes,
                                                       rng, cfg.tau_count);
  Regularity r;
  r.cert = interpolant_regularity_certificate(cfg.pi0, cfg.pi1, s);
  CsvTable t;
  t.file = "lambda_profile.csv";
  t.columns = {"t", "tau_star", "x_star_norm", "lambda_hat", "lambda_cert"};
  t.descriptions = {"time", "noise scale attaining the probe-sup",
                    "norm of the probe point attaining the probe-sup",
                    "probe-sup of |cov(noise | observation)|_op / tau^2 (lower bound)",
                    "analytic certificate at t (empty if none)"};
  Json rows = Json::array();
  for (const auto& m : profile) {
    r.lambda_hat_max = std::max(r.lambda_hat_max, m.estimate.lambda_hat);
    t.rows.push_back({num(m.t), num(m.estimate.tau_star), num(m.estimate.x_star.norm()),
                      num(m.estimate.lambda_hat),
                      m.estimate.lambda_cert ? num(*m.estimate.lambda_cert) : ""});
    Json row = {{"t", m.t},
                {"tau_star", m.estimate.tau_star},
                {"x_star_norm", m.estimate.x_star.norm()},
                {"lambda_hat", m.estimate.lambda_hat}};
    row["lambda_cert"] = m.estimate.lambda_cert ? Json(*m.estimate.lambda_cert) : Json(nullptr);
    rows.push_back(row);
  }
  report.tables.push_back(t);
  if (r.cert) {
    r.lambda = *r.cert;
    r.source = "certificate";
  } else {
    r.lambda = std::max(1.0, r.lambda_hat_max);
    r.source = "probe-sup (lower bound)";
  }
  report.body["lambda"] = {{"value", r.lambda},
                           {"source", r.source},
                           {"lambda_hat_max", r.lambda_hat_max},
                           {"probe_spec", describe(cfg.probes)},
                           {"profile", rows}};
  if (!profile.empty()) report.body["lambda"]["tau_grid_size"] = profile.front().estimate.tau_grid.size();
  return r;
}

struct Radius {
  double radius = 0.0;
  double tail_mass = 0.0;
};

Radius support_radius(const ExperimentConfig& cfg, bool include_pi0, RunReport& report) {
  RngStream r1(cfg.seed, kRadius1);
  const SupportRadius s1 = effective_support_radius(cfg.pi1, cfg.support_quantile, r1, cfg.support_samples);
  Radius out{s1.radius, s1.tail_mass};
  Json j = {{"pi1", radius_json(s1)}};
  if (include_pi0) {
    RngStream r0(cfg.seed, kRadius0);
    const SupportRadius s0 = effective_support_radius(cfg.pi0, cfg.support_quantile, r0, cfg.support_samples);
    out.radius = std::max(out.radius, s0.radius);
    out.tail_mass = std::max(out.tail_mass, s0.tail_mass);
    j["pi0"] = radius_json(s0);
  }
  j["R"] = out.radius;
  j["tail_mass_excluded"] = out.tail_mass;
  report.body["support_radius"] = j;
  return out;
}

Json profile_json(const std::vector<LipschitzPoint>& p) {
  Json rows = Json::array();
  for (const auto& lp : p) rows.push_back({{"t", lp.t}, {"l_hat", lp.l_hat}, {"x_star_norm", lp.x_star.norm()}});
  return rows;
}

Json eps_json(double amplitude, const L2ErrorEstimate& e) {
  return {{"amplitude", amplitude},        {"epsilon", e.epsilon},
          {"epsilon_sq", e.epsilon_sq},    {"mc_epsilon_sq", e.mc_epsilon_sq},
          {"mc_std_error", e.mc_std_error}, {"ci_low", e.ci_low},
          {"ci_high", e.ci_high},          {"cv_epsilon_sq", e.cv_epsilon_sq},
          {"n_mc", e.n_mc}};
}

CsvTable epsilon_table() {
  CsvTable t;
  t.file = "perturbations.csv";
  t.columns = {"amplitude", "epsilon", "epsilon_mc_ci_low", "epsilon_mc_ci_high",
               "lipschitz_integral", "coupled_w2", "empirical_w2"};
  t.descriptions = {"perturbation amplitude c",
                    "closed-form L2 distance to the exact field",
                    "lower 95% Monte Carlo bound on epsilon",
                    "upper 95% Monte Carlo bound on epsilon",
                    "integral over t of the probe-sup Lipschitz profile of the perturbed field",
                    "sqrt(mean |Y_1 - Z_1|^2) under the shared-start coupling",
                    "exact-assignment empirical W2 between the two endpoint sets"};
  return t;
}

}  // namespace

RunReport run_bound_suite(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport report = start_report("bounds", cfg);
  const Schedule s = cfg.schedule.build();
  const Eigen::Index d = cfg.pi1.dim();

  const Regularity reg = interpolant_lambda(cfg, s, report);
  const Radius rad = support_radius(cfg, true, report);
  const ScheduleIntegrals si = schedule_integrals(s, rad.radius);
  report.body["dimension"] = d;
  report.body["schedule"] = {{"kind", to_string(s.kind())},
                             {"gamma_min", s.gamma_min()},
                             {"gamma_max", s.gamma_max()},
                             {"gamma_concave", s.gamma_concave()},
                             {"i_gamma", si.i_gamma},
                             {"i_alpha", si.i_alpha},
                             {"i_beta", si.i_beta},
                             {"C", si.c}};

  auto base = std::make_shared<const ExactVelocityField>(cfg.pi0, cfg.pi1, s);
  RngStream lrng(cfg.seed, kLipschitz);
  const auto l_exact = lipschitz_profile(*base, cfg.t_grid, cfg.probes, lrng);
  const double int_l_exact = integrate_profile(l_exact);
  const auto envelope = kt_profile(reg.lambda, rad.radius, s, KtSetting::Envelope);

  CsvTable lt;
  lt.file = "lipschitz_profile.csv";
  lt.columns = {"t", "l_hat", "envelope", "x_star_norm"};
  lt.descriptions = {"time", "probe-sup of |grad v^X|_op",
                     "lambda |gamma'|/gamma + sqrt(lambda) R (|alpha'| + |beta'|)/gamma",
                     "norm of the probe attaining l_hat"};
  bool pointwise = true;
  Json pw = Json::array();
  for (const auto& lp : l_exact) {
    const double k = envelope(lp.t);
    const bool ok = lp.l_hat <= k + default_slack(k);
    pointwise = pointwise && ok;
    lt.rows.push_back({num(lp.t), num(lp.l_hat), num(k), num(lp.x_star.norm())});
    pw.push_back({{"t", lp.t}, {"l_hat", lp.l_hat}, {"envelope", k}, {"pass", ok}});
  }
  report.tables.push_back(lt);
  report.body["lipschitz"] = {{"integral_exact", int_l_exact}, {"pointwise_envelope", pw},
                              {"pointwise_pass", pointwise}};
  report.pass = report.pass && pointwise;

  const std::map<std::string, double> common{{"lambda", reg.lambda},
                                              {"R", rad.radius},
                                              {"tail_mass_excluded", rad.tail_mass},
                                              {"d", static_cast<double>(d)}};
  {
    auto c = common;
    c["i_gamma"] = si.i_gamma;
    c["i_alpha"] = si.i_alpha;
    c["i_beta"] = si.i_beta;
    c["lipschitz_integral"] = int_l_exact;
    report.bounds.push_back(make_report(Theorem::T3_2, "exact", int_l_exact,
                                        rhs_theorem_3_2(reg.lambda, rad.radius, si), c,
                                        "lambda source: " + reg.source));
  }

  const std::vector<double> amplitudes = resolve_amplitudes(base, cfg.perturbation);
  RngStream start_rng(cfg.seed, kStarts);
  const PointSet starts = sample_interpolant(*base, 0.0, cfg.n_particles, start_rng);
  const FlowResult exact_flow = integrate(*base, starts, 0.0, 1.0, cfg.solver);
  RngStream target_rng(cfg.seed, kTarget);
  const PointSet target = sample(cfg.pi1, cfg.n_particles, target_rng);
  RngStream cal_rng(cfg.seed, kCalibration);
  const PointSet target2 = sample(cfg.pi1, cfg.n_particles, cal_rng);
  report.body["calibration_w2_pi1"] = transport_json(w2_auto(target, target2));
  report.body["exact_flow"] = {{"steps", exact_flow.stats.steps},
                               {"rejected", exact_flow.stats.rejected},
                               {"w2_to_pi1", w2_auto(exact_flow.endpoints, target).w2}};

  const bool concave = s.gamma_concave();
  const Coefficients c0 = s.eval(0.0);
  const Coefficients c1 = s.eval(1.0);
  const double gmin = s.gamma_min();
  const double gmax = s.gamma_max();
  const bool relaxed_form = std::abs(c0.alpha - 1.0) < 1e-12 && std::abs(c1.beta - 1.0) < 1e-12 &&
                            std::abs(c0.gamma - gmin) < 1e-12 * gmax &&
                            std::abs(c1.gamma - gmin) < 1e-12 * gmax;

  CsvTable et = epsilon_table();
  Json runs = Json::array();
  std::vector<double> eps_list, coupled_list;
  bool chain_ok = true;
  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    const double amp = amplitudes[k];
    const PerturbedVelocityField pf = make_perturbed(base, cfg.perturbation, amp);
    RngStream erng = RngStream(cfg.seed, kEpsilon).split(k);
    const L2ErrorEstimate e = l2_error(pf, cfg.n_mc, {}, erng);
    std::vector<LipschitzPoint> l_pert = l_exact;
    bool conforming = true;
    for (auto& lp : l_pert) {
      lp.increment = pf.lipschitz_increment(lp.t);
      lp.l_hat += lp.increment;
      conforming = conforming && lp.l_hat <= envelope(lp.t);
    }
    const double int_l = integrate_profile(l_pert);
    const FlowResult pflow = integrate(pf, starts, 0.0, 1.0, cfg.solver);
    const double coupled = coupled_w2_upper(pflow.endpoints, exact_flow.endpoints);
    const TransportResult emp = w2_auto(pflow.endpoints, exact_flow.endpoints);
    const std::string inst = "amplitude=" + num(amp);

    auto c = common;
    c["epsilon"] = e.epsilon;
    c["lipschitz_integral"] = int_l;
    c["amplitude"] = amp;
    c["empirical_w2"] = emp.w2;
    const double rhs31 = rhs_theorem_3_1(e.epsilon, int_l);
    report.bounds.push_back(make_report(Theorem::T3_1, inst, coupled, rhs31, c));

    Json run = {{"amplitude", amp},       {"epsilon", eps_json(amp, e)},
                {"lipschitz_integral", int_l}, {"lipschitz_profile", profile_json(l_pert)},
                {"coupled_w2", coupled},  {"empirical_w2", transport_json(emp)},
                {"conforming", conforming}, {"solver_steps", pflow.stats.steps}};
    if (concave && conforming) {
      auto c8 = common;
      c8["epsilon"] = e.epsilon;
      c8["C"] = si.c;
      c8["gamma_min"] = gmin;
      c8["gamma_max"] = gmax;
      const double rhs38 = rhs_theorem_3_8(e.epsilon, reg.lambda, si.c, gmin, gmax);
      report.bounds.push_back(make_report(Theorem::T3_8, inst, coupled, rhs38, c8));
      const bool chain = coupled <= rhs31 + default_slack(rhs31) && rhs31 <= rhs38 + default_slack(rhs38);
      chain_ok = chain_ok && chain;
      run["chain"] = {{"coupled_w2", coupled}, {"rhs_3_1", rhs31}, {"rhs_3_8", rhs38}, {"pass", chain}};
      if (relaxed_form) {
        const double total = w2_auto(pflow.endpoints, target).w2;
        const double rhs39 = rhs_theorem_3_9(e.epsilon, reg.lambda, si.c, gmin, gmax, static_cast<double>(d));
        report.bounds.push_back(make_report(Theorem::T3_9, inst, total, rhs39, c8,
                                            "lhs: empirical W2 to fresh pi1 samples"));
        run["w2_to_pi1"] = total;
      }
      if (e.epsilon > 0.0) {
        const GammaMinOptimum opt = optimal_gamma_min(e.epsilon, reg.lambda, static_cast<double>(d));
        run["gamma_min_optimum"] = {{"minimizer", opt.minimizer}, {"rule", opt.rule},
                                    {"ratio", opt.ratio}, {"factor", 2.0}};
        report.bounds.push_back(make_report(
            Theorem::C3_10, inst, std::abs(std::log(opt.ratio)), std::log(2.0),
            {{"epsilon", e.epsilon}, {"lambda", reg.lambda}, {"d", static_cast<double>(d)},
             {"minimizer", opt.minimizer}, {"rule", opt.rule}, {"factor", 2.0}},
            "|log(grid minimizer / rule)| against log 2; C = gamma_max = 1"));
      }
    }
    runs.push_back(run);
    et.rows.push_back({num(amp), num(e.epsilon), num(e.ci_low), num(e.ci_high), num(int_l),
                       num(coupled), num(emp.w2)});
    if (e.epsilon > 0.0) {
      eps_list.push_back(e.epsilon);
      coupled_list.push_back(coupled);
    }
  }
  report.tables.push_back(et);
  report.body["perturbations"] = runs;
  report.body["chain_pass"] = chain_ok;
  report.pass = report.pass && chain_ok;
  const auto slope = fit_loglog_slope(eps_list, coupled_list);
  report.body["w2_vs_epsilon_slope"] = slope ? Json(*slope) : Json(nullptr);
  finish(report, t0);
  return report;
}

RunReport run_scaling_study(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport report = start_report("scaling", cfg);
  if (cfg.schedule.kind != "generic_concave") {
    throw ConfigError("schedule.kind: scaling study needs the generic_concave preset");
  }
  const std::vector<double>& targets = cfg.perturbation.epsilon_targets;
  if (targets.empty()) throw ConfigError("perturbation.epsilon_targets: required for scaling");
  const Schedule s0 = cfg.schedule.build();
  const Eigen::Index d = cfg.pi1.dim();
  const double R = cfg.schedule.radius;
  const Regularity reg = interpolant_lambda(cfg, s0, report);

  RngStream target_rng(cfg.seed, kTarget);
  const PointSet target = sample(cfg.pi1, cfg.n_particles, target_rng);
  CsvTable t;
  t.file = "scaling.csv";
  t.columns = {"epsilon", "gamma_min", "delta", "amplitude", "w2_total", "coupled_w2"};
  t.descriptions = {"closed-form L2 error of the perturbed field",
                    "smoothing floor set by the scaling rule",
                    "relaxation parameter giving that floor",
                    "perturbation amplitude hitting epsilon",
                    "empirical W2 between perturbed-flow endpoints and pi1 samples",
                    "coupled W2 between perturbed and exact flows"};
  std::vector<double> eps, w2s;
  Json rows = Json::array();
  for (std::size_t k = 0; k < targets.size(); ++k) {
    const double e = targets[k];
    const double gmin = gamma_min_rule(e, reg.lambda, static_cast<double>(d));
    const double delta = 0.5 * (-1.0 + std::sqrt(1.0 + (gmin / R) * (gmin / R)));
    const Schedule s = Schedule::generic_concave(R, delta);
    auto base = std::make_shared<const ExactVelocityField>(cfg.pi0, cfg.pi1, s);
    PerturbationSpec p = cfg.perturbation;
    p.epsilon_targets = {e};
    const double amp = resolve_amplitudes(base, p).front();
    const PerturbedVelocityField pf = make_perturbed(base, p, amp);
    RngStream srng = RngStream(cfg.seed, kScaling).split(k);
    const PointSet starts = sample_interpolant(*base, 0.0, cfg.n_particles, srng);
    const FlowResult ef = integrate(*base, starts, 0.0, 1.0, cfg.solver);
    const FlowResult pfl = integrate(pf, starts, 0.0, 1.0, cfg.solver);
    const double total = w2_auto(pfl.endpoints, target).w2;
    const double coupled = coupled_w2_upper(pfl.endpoints, ef.endpoints);
    eps.push_back(e);
    w2s.push_back(total);
    t.rows.push_back({num(e), num(gmin), num(delta), num(amp), num(total), num(coupled)});
    rows.push_back({{"epsilon", e}, {"gamma_min", gmin}, {"delta", delta}, {"amplitude", amp},
                    {"w2_total", total}, {"coupled_w2", coupled}});
  }
  report.tables.push_back(t);
  report.body["runs"] = rows;
  const double theory = 1.0 / (2.0 * reg.lambda + 1.0);
  report.body["slope_theory"] = theory;
  double lo = *std::min_element(targets.begin(), targets.end());
  double hi = *std::max_element(targets.begin(), targets.end());
  report.body["design_ok"] = targets.size() >= 5 && hi / lo >= 100.0;
  const auto slope = fit_loglog_slope(eps, w2s);
  if (slope) {
    report.body["slope_w2_vs_eps"] = *slope;
    report.body["slope_vs_theory"] = *slope - theory;
    report.pass = *slope <= 1.1;
  } else {
    report.body["slope_w2_vs_eps"] = nullptr;
    report.body["fit_error"] = "fewer than two usable epsilon values; no slope";
  }
  finish(report, t0);
  return report;
}

RunReport run_pfode_suite(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport report = start_report("pfode", cfg);
  PfodeVariant variant;
  if (cfg.schedule.kind == "vp") {
    variant = PfodeVariant::VP;
    if (std::abs(cfg.schedule.radius - 1.0) > 1e-12) {
      throw ConfigError("schedule.R: the probability-flow suite needs R = 1 (gamma_0 = 1)");
    }
  } else if (cfg.schedule.kind == "ve") {
    variant = PfodeVariant::VE;
    if (std::abs(cfg.schedule.gamma0 - 1.0) > 1e-12) {
      throw ConfigError("schedule.gamma0: the probability-flow suite needs gamma0 = 1");
    }
  } else {
    throw ConfigError("schedule.kind: the probability-flow suite needs 'vp' or 've'");
  }
  const Schedule s = cfg.schedule.build();
  const Eigen::Index d = cfg.pi1.dim();
  const GaussianMixture reference = GaussianMixture::standard_normal(d);

  RngStream lam_rng(cfg.seed, kEndpointLambda);
  const RegularityEstimate est =
      estimate_lambda(cfg.pi1, default_tau_grid(cfg.pi1, cfg.tau_count), cfg.probes, lam_rng);
  const double lambda = est.lambda_cert ? *est.lambda_cert : std::max(1.0, est.lambda_hat);
  report.body["lambda"] = {{"value", lambda},
                           {"source", est.lambda_cert ? "certificate" : "probe-sup (lower bound)"},
                           {"lambda_hat", est.lambda_hat},
                           {"tau_star", est.tau_star},
                           {"x_star_norm", est.x_star.norm()},
                           {"probe_spec", est.x_grid_spec}};
  ExperimentConfig one = cfg;
  one.pi0 = reference;
  const Radius rad = support_radius(one, false, report);
  const double gamma1 = s.gamma(1.0);
  report.body["gamma_1"] = gamma1;

  auto base = std::make_shared<const ExactVelocityField>(reference, cfg.pi1, s);
  RngStream grng(cfg.seed, kGrad);
  const GradCheckResult gc = gradient_suite(*base, cfg.grad_points, grng, 0.05, 1.0);
  report.body["jacobian_crosscheck"] = {{"points", gc.points},
                                        {"max_discrepancy", *gc.max_pfode_discrepancy},
                                        {"max_fd_error", gc.max_velocity_jacobian_error},
                                        {"pass", *gc.max_pfode_discrepancy <= 1e-8}};
  report.pass = report.pass && *gc.max_pfode_discrepancy <= 1e-8;

  RngStream lrng(cfg.seed, kLipschitz);
  const auto l_exact = lipschitz_profile(*base, cfg.t_grid, cfg.probes, lrng);
  const double int_l = integrate_profile(l_exact);
  const double i_gamma = log_gamma_total_variation(s);
  const double kt_int = kt_integral(lambda, rad.radius, s, KtSetting::Pfode);
  const Theorem cor = variant == PfodeVariant::VP ? Theorem::C4_3_VP : Theorem::C4_3_VE;
  report.bounds.push_back(make_report(cor, "exact", int_l, rhs_corollary_4_3(variant, lambda, gamma1),
                                      {{"lambda", lambda},
                                       {"gamma_1", gamma1},
                                       {"i_gamma", i_gamma},
                                       {"kt_integral", kt_int},
                                       {"R", rad.radius},
                                       {"tail_mass_excluded", rad.tail_mass}}));
  report.body["lipschitz"] = {{"integral_exact", int_l}, {"profile", profile_json(l_exact)},
                              {"kt_integral", kt_int}, {"i_gamma", i_gamma}};

  const auto kt = kt_profile(lambda, rad.radius, s, KtSetting::Pfode);
  const std::vector<double> amplitudes = resolve_amplitudes(base, cfg.perturbation);
  RngStream start_rng(cfg.seed, kStarts);
  const PointSet starts = sample_interpolant(*base, 0.0, cfg.n_particles, start_rng);
  const FlowResult exact_flow = integrate(*base, starts, 0.0, 1.0, cfg.solver);
  const Theorem thm = variant == PfodeVariant::VP ? Theorem::T4_4_VP : Theorem::T4_4_VE;
  CsvTable et = epsilon_table();
  Json runs = Json::array();
  for (std::size_t k = 0; k < amplitudes.size(); ++k) {
    const double amp = amplitudes[k];
    const PerturbedVelocityField pf = make_perturbed(base, cfg.perturbation, amp);
    RngStream erng = RngStream(cfg.seed, kEpsilon).split(k);
    const L2ErrorEstimate e = l2_error(pf, cfg.n_mc, {}, erng);
    bool conforming = true;
    std::vector<LipschitzPoint> l_pert = l_exact;
    for (auto& lp : l_pert) {
      lp.increment = pf.lipschitz_increment(lp.t);
      lp.l_hat += lp.increment;
      conforming = conforming && lp.l_hat <= kt(lp.t);
    }
    const FlowResult pflow = integrate(pf, starts, 0.0, 1.0, cfg.solver);
    const double coupled = coupled_w2_upper(pflow.endpoints, exact_flow.endpoints);
    const TransportResult emp = w2_auto(pflow.endpoints, exact_flow.endpoints);
    report.bounds.push_back(make_report(
        thm, "amplitude=" + num(amp), coupled, rhs_theorem_4_4(variant, e.epsilon, lambda, gamma1),
        {{"epsilon", e.epsilon}, {"lambda", lambda}, {"gamma_1", gamma1}, {"amplitude", amp},
         {"empirical_w2", emp.w2}},
        conforming ? "" : "perturbed field exceeds K_t on the grid"));
    runs.push_back({{"amplitude", amp}, {"epsilon", eps_json(amp, e)}, {"coupled_w2", coupled},
                    {"empirical_w2", transport_json(emp)}, {"conforming", conforming},
                    {"lipschitz_integral", integrate_profile(l_pert)}});
    et.rows.push_back({num(amp), num(e.epsilon), num(e.ci_low), num(e.ci_high),
                       num(integrate_profile(l_pert)), num(coupled), num(emp.w2)});
  }
  report.tables.push_back(et);
  report.body["perturbations"] = runs;
  finish(report, t0);
  return report;
}

RunReport run_regularity(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport report = start_report("regularity", cfg);
  const Schedule s = cfg.schedule.build();
  RngStream rng(cfg.seed, kLambda);
  const auto profile = interpolant_marginal_regularity(cfg.pi0, cfg.pi1, s, cfg.t_grid, cfg.probes,
                                                       rng, cfg.tau_count);
  CsvTable t;
  t.file = "lambda_profile.csv";
  t.columns = {"t", "tau_star", "x_star_norm", "lambda_hat", "lambda_cert"};
  t.descriptions = {"time", "noise scale attaining the probe-sup",
                    "norm of the probe point attaining the probe-sup",
                    "probe-sup of |cov(noise | observation)|_op / tau^2 (lower bound)",
                    "analytic certificate at t (empty if none)"};
  bool ok = true;
  Json rows = Json::array();
  for (const auto& m : profile) {
    const auto& e = m.estimate;
    const bool within = !e.lambda_cert || e.lambda_hat <= *e.lambda_cert + 1e-6;
    ok = ok && within;
    t.rows.push_back({num(m.t), num(e.tau_star), num(e.x_star.norm()), num(e.lambda_hat),
                      e.lambda_cert ? num(*e.lambda_cert) : ""});
    Json row = {{"t", m.t}, {"tau_star", e.tau_star}, {"x_star_norm", e.x_star.norm()},
                {"lambda_hat", e.lambda_hat}, {"within_certificate", within}};
    row["lambda_cert"] = e.lambda_cert ? Json(*e.lambda_cert) : Json(nullptr);
    rows.push_back(row);
  }
  report.tables.push_back(t);
  report.body["profile"] = rows;
  report.body["probe_spec"] = describe(cfg.probes);

  Json endpoints = Json::object();
  for (int which = 0; which < 2; ++which) {
    const GaussianMixture& gm = which == 0 ? cfg.pi0 : cfg.pi1;
    RngStream er = RngStream(cfg.seed, kEndpointLambda).split(which);
    const auto e = estimate_lambda(gm, default_tau_grid(gm, cfg.tau_count), cfg.probes, er);
    const bool within = !e.lambda_cert || e.lambda_hat <= *e.lambda_cert + 1e-6;
    ok = ok && within;
    Json j = {{"lambda_hat", e.lambda_hat}, {"tau_star", e.tau_star},
              {"x_star_norm", e.x_star.norm()}, {"within_certificate", within}};
    j["lambda_cert"] = e.lambda_cert ? Json(*e.lambda_cert) : Json(nullptr);
    endpoints[which == 0 ? "pi0" : "pi1"] = j;
  }
  report.body["endpoints"] = endpoints;

  const double tau = cfg.tail_check_tau.value_or(cfg.pi1.sigma_min());
  Json checks = Json::array();
  for (std::size_t k = 0; k < cfg.tail_check_c.size(); ++k) {
    RngStream hr = RngStream(cfg.seed, kTailCheck).split(k);
    const auto h = high_probability_cov_check(cfg.pi1, tau, cfg.tail_check_c[k], cfg.tail_check_samples, hr);
    ok = ok && h.pass;
    checks.push_back({{"c", cfg.tail_check_c[k]}, {"tau", tau}, {"violation_rate", h.violation_rate},
                      {"bound", h.bound}, {"ci_half_width", h.ci_half_width},
                      {"threshold", h.threshold}, {"n_samples", h.n_samples}, {"pass", h.pass}});
  }
  report.body["high_probability_checks"] = checks;
  report.pass = ok;
  finish(report, t0);
  return report;
}

RunReport run_gradcheck(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport report = start_report("gradcheck", cfg);
  const Schedule s = cfg.schedule.build();
  const ExactVelocityField f(cfg.pi0, cfg.pi1, s);
  RngStream rng(cfg.seed, kGrad);
  const GradCheckResult g = gradient_suite(f, cfg.grad_points, rng, s.alpha_vanishes() ? 0.05 : 0.0, 1.0);
  report.body["points"] = g.points;
  report.body["max_velocity_jacobian_error"] = g.max_velocity_jacobian_error;
  report.body["max_mean_x0_jacobian_error"] = g.max_mean_x0_jacobian_error;
  report.body["max_mean_x1_jacobian_error"] = g.max_mean_x1_jacobian_error;
  report.body["max_pfode_discrepancy"] =
      g.max_pfode_discrepancy ? Json(*g.max_pfode_discrepancy) : Json(nullptr);
  report.body["tolerances"] = {{"finite_difference", 1e-5}, {"pfode", 1e-8}};
  report.pass = g.pass;
  finish(report, t0);
  return report;
}

RunReport run_w2(const ExperimentConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport report = start_report("w2", cfg);
  RngStream ra = RngStream(cfg.seed, kW2).split(0);
  RngStream rb = RngStream(cfg.seed, kW2).split(1);
  RngStream rc = RngStream(cfg.seed, kW2).split(2);
  const PointSet a = sample(cfg.pi0, cfg.w2_samples, ra);
  const PointSet b = sample(cfg.pi1, cfg.w2_samples, rb);
  const PointSet a2 = sample(cfg.pi0, cfg.w2_samples, rc);
  report.body["n"] = cfg.w2_samples;
  if (cfg.w2_samples <= kExactAssignmentCap) {
    report.body["exact"] = transport_json(w2_empirical(a, b));
    report.body["calibration_pi0"] = transport_json(w2_empirical(a, a2));
  } else {
    report.body["sinkhorn"] = transport_json(w2_sinkhorn(a, b));
    report.body["calibration_pi0"] = transport_json(w2_sinkhorn(a, a2));
  }
  if (cfg.pi0.dim() == 1) {
    report.body["quantile_1d"] = transport_json(w2_empirical(a, b, TransportMethod::Quantile1D));
  }
  if (cfg.pi0.size() == 1 && cfg.pi1.size() == 1) {
    // Gaussian closed form |m0 - m1|^2 + tr(S0 + S1 - 2 (S1^1/2 S0 S1^1/2)^1/2).
    const Mat& s0 = cfg.pi0.covariance(0);
    const Mat& s1 = cfg.pi1.covariance(0);
    Eigen::SelfAdjointEigenSolver<Mat> e1(s1);
    const Mat r1 = e1.operatorSqrt();
    Eigen::SelfAdjointEigenSolver<Mat> mid(r1 * s0 * r1);
    const double tr = (s0 + s1).trace() - 2.0 * mid.operatorSqrt().trace();
    report.body["closed_form"] = std::sqrt(std::max(0.0, (cfg.pi0.mean(0) - cfg.pi1.mean(0)).squaredNorm() + tr));
  }
  finish(report, t0);
  return report;
}

}  // namespace fmlab
