#include "grcox/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
  CLI::App app{"Generalized raking for Cox regression under two-phase sampling with error-prone data"};
  app.set_version_flag("--version", std::string(GRCOX_VERSION));
  app.require_subcommand(1);

  grcox::SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study over a config grid");
  simulate->add_option("--config", sim.config, "JSON config")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out_dir, "Output directory (default $GRCOX_OUT_DIR)");
  simulate->add_option("--threads", sim.threads, "Worker threads (default $GRCOX_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--profile", sim.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  simulate->add_option("--replicates", sim.replicates, "Override the replicate count of every cell")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--export-replicate", sim.export_replicate,
                       "Also write the cohort and sample of this replicate for every cell");

  grcox::AnalyzeOptions an;
  std::string methods;
  auto* analyze = app.add_subcommand("analyze", "Two-phase analysis of a cohort CSV");
  analyze->add_option("--data", an.data, "Cohort CSV")->required()->check(CLI::ExistingFile);
  analyze->add_option("--map", an.map, "JSON column map")->required()->check(CLI::ExistingFile);
  analyze->add_option("--methods", methods, "Comma-separated method list")->required();
  auto* pi = analyze->add_option("--pi-column", an.pi_column, "Column holding inclusion probabilities");
  auto* design = analyze->add_option("--design", an.design, "JSON design spec to draw the validation sample")
                     ->check(CLI::ExistingFile);
  pi->excludes(design);
  analyze->add_option("--seed", an.seed, "Master seed")->required();
  analyze->add_option("--replicate", an.replicate, "Stream index under the seed");
  analyze->add_option("--out", an.out_dir, "Output directory (default $GRCOX_OUT_DIR)");
  analyze->add_option("--imputations", an.m_count, "Number of imputations M");
  analyze->add_option("--fcs-iterations", an.l_count, "Chained-equation rounds L");
  analyze->add_option("--fcs-variables", an.fcs_vars, "delta, delta-u or delta-u-x")
      ->check(CLI::IsMember({"delta", "delta-u", "delta-u-x"}));
  bool no_intercept = false;
  analyze->add_flag("--no-intercept-calibration", no_intercept, "Calibrate on the auxiliaries alone");

  grcox::DesignOptions de;
  auto* design_cmd = app.add_subcommand("design", "Draw a phase-two validation sample");
  design_cmd->add_option("--data", de.data, "Cohort CSV")->required()->check(CLI::ExistingFile);
  design_cmd->add_option("--spec", de.spec, "JSON design spec with a 'columns' map")->required()->check(CLI::ExistingFile);
  design_cmd->add_option("--seed", de.seed, "Seed")->required();
  design_cmd->add_option("--out", de.out, "Sample CSV")->required();

  grcox::DiagnoseOptions di;
  auto* diagnose = app.add_subcommand("diagnose", "Export true vs error-prone influence pairs");
  diagnose->add_option("--config", di.config, "JSON config")->required()->check(CLI::ExistingFile);
  diagnose->add_option("--out", di.out, "Influence-pair CSV")->required();

  CLI11_PARSE(app, argc, argv);

  if (*simulate) return grcox::cmd_simulate(sim, std::cerr);
  if (*analyze) {
    std::stringstream ss(methods);
    for (std::string m; std::getline(ss, m, ',');) {
      if (!m.empty()) an.methods.push_back(m);
    }
    an.intercept_calibration = !no_intercept;
    return grcox::cmd_analyze(an, std::cerr);
  }
  if (*design_cmd) return grcox::cmd_design(de, std::cerr);
  if (*diagnose) return grcox::cmd_diagnose(di, std::cerr);
  return 1;
}
