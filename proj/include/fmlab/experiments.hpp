// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmlab/bounds.hpp"
#include "fmlab/flow.hpp"
#include "fmlab/mixtures.hpp"
#include "fmlab/regularity.hpp"
#include "fmlab/schedules.hpp"
#include "fmlab/velocity.hpp"

namespace fmlab {

using Json = nlohmann::ordered_json;

struct ScheduleSpec {
  std::string kind = "generic_concave";  // generic_concave | vp | ve | custom
  double radius = 1.0;
  double delta = 0.01;
  double gamma0 = 1.0;
  double gamma1 = 0.01;
  struct Fn {
    std::string id;
    std::vector<double> params;
  };
  Fn alpha;
  Fn beta;
  Fn gamma;

  /// Throws ConfigError when gamma_0 or gamma_1 is not positive or the
  /// parameters are otherwise invalid.
  Schedule build() const;
};

struct PerturbationSpec {
  std::vector<double> amplitudes;
  /// When set, amplitudes are chosen so that the closed-form epsilon hits
  /// each target exactly (epsilon is linear in the amplitude).
  std::vector<double> epsilon_targets;
  Vec frequency;
  double phase = 0.0;
  Vec direction;
  TimeProfile profile;
};

struct ExperimentConfig {
  std::string name = "experiment";
  GaussianMixture pi0 = GaussianMixture::standard_normal(1);
  GaussianMixture pi1 = GaussianMixture::standard_normal(1);
  ScheduleSpec schedule;
  PerturbationSpec perturbation;
  std::size_t n_particles = 2000;
  std::size_t n_mc = 100'000;
  SolverSpec solver;
  std::vector<double> t_grid;  // defaults to 21 uniform nodes
  ProbeSpec probes;
  int tau_count = 33;
  double support_quantile = 0.999;
  std::size_t support_samples = 1'000'000;
  std::vector<double> marginal_checks{0.25, 0.5, 0.75, 1.0};
  std::vector<double> tail_check_c{1.0, 1.5, 2.0, 3.0};
  std::optional<double> tail_check_tau;
  std::size_t tail_check_samples = 100'000;
  std::size_t grad_points = 50;
  std::size_t w2_samples = 2000;
  std::uint64_t seed = 0;
  Json echo;  // the parsed document, reproduced in every report
};

/// Parses and validates a JSON config. Throws ConfigError naming the
/// offending path.
ExperimentConfig parse_config(const Json& doc);
ExperimentConfig load_config(const std::string& path);

GaussianMixture parse_mixture(const Json& j, const std::string& path);
Json to_json(const GaussianMixture& gm);
Json to_json(const BoundReport& r);

/// Plain table written as CSV with a header row; `descriptions` feed the
/// schema file.
struct CsvTable {
  std::string file;
  std::vector<std::string> columns;
  std::vector<std::string> descriptions;
  std::vector<std::vector<std::string>> rows;
};

struct RunReport {
  std::string command;
  Json config;
  Json body = Json::object();
  std::vector<BoundReport> bounds;
  std::vector<CsvTable> tables;
  bool pass = true;
  double wall_clock_seconds = 0.0;

  /// Everything except `timing` is a pure function of (config, seed).
  Json to_json() const;
};

/// Writes report.json, every table, bounds.csv and schema.json into `dir`.
void write_report(const RunReport& report, const std::string& dir);

/// Least-squares slope of log y against log x over positive pairs; empty
/// with fewer than two usable points.
std::optional<double> fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct GradCheckResult {
  std::size_t points = 0;
  double max_velocity_jacobian_error = 0.0;   // relative Frobenius, vs central differences
  double max_mean_x0_jacobian_error = 0.0;
  double max_mean_x1_jacobian_error = 0.0;
  std::optional<double> max_pfode_discrepancy;  // set when alpha vanishes
  bool pass = false;  // differences <= 1e-5, probability-flow discrepancy <= 1e-8
};

/// Central differences with h = 1e-5 (1 + |x|) at `n` draws (t ~ U[t_lo, t_hi],
/// x ~ X_t). Relative error is |dJ|_F / max(1, |J|_F).
GradCheckResult gradient_suite(const ExactVelocityField& f, std::size_t n, RngStream& rng,
                               double t_lo = 0.05, double t_hi = 0.95);

RunReport run_bound_suite(const ExperimentConfig& cfg);
RunReport run_scaling_study(const ExperimentConfig& cfg);
RunReport run_pfode_suite(const ExperimentConfig& cfg);
RunReport run_regularity(const ExperimentConfig& cfg);
RunReport run_gradcheck(const ExperimentConfig& cfg);
RunReport run_w2(const ExperimentConfig& cfg);

}  // namespace fmlab
