// SPDX-License-Identifier: Apache-2.0
//
// fmlab: run one verification experiment from a JSON config and write
// report.json, CSV tables and schema.json to the output directory.

#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "fmlab/errors.hpp"
#include "fmlab/experiments.hpp"

namespace {

struct Command {
  const char* name;
  const char* help;
  std::function<fmlab::RunReport(const fmlab::ExperimentConfig&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-matching error-bound verification experiments"};
  app.require_subcommand(1);
  const std::vector<Command> commands{
      {"bounds", "exact vs perturbed flows, W2 and Lipschitz bounds", fmlab::run_bound_suite},
      {"scaling", "W2 vs epsilon under the smoothing-floor rule", fmlab::run_scaling_study},
      {"pfode", "probability-flow (VP/VE) Lipschitz and W2 bounds", fmlab::run_pfode_suite},
      {"regularity", "lambda profile and high-probability covariance checks", fmlab::run_regularity},
      {"gradcheck", "Jacobian formulas vs central finite differences", fmlab::run_gradcheck},
      {"w2", "Wasserstein-2 between endpoint samples", fmlab::run_w2},
  };
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::map<std::string, CLI::App*> subs;
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    subs[c.name] = sub;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    fmlab::ExperimentConfig cfg = fmlab::load_config(config_path);
    if (seed) cfg.seed = *seed;
    for (const auto& c : commands) {
      if (!subs.at(c.name)->parsed()) continue;
      const fmlab::RunReport report = c.run(cfg);
      fmlab::write_report(report, out_dir);
      for (const auto& b : report.bounds) {
        std::printf("%-8s %-28s lhs=%.6g rhs=%.6g %s\n", fmlab::to_string(b.theorem),
                    b.instance.c_str(), b.lhs_measured, b.rhs_computed, b.pass ? "PASS" : "FAIL");
      }
      std::printf("%s: %s (%.1fs) -> %s\n", c.name, report.pass ? "PASS" : "FAIL",
                  report.wall_clock_seconds, out_dir.c_str());
      return report.pass ? 0 : 1;
    }
  } catch (const fmlab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
