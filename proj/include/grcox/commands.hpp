#pragma once

#include "grcox/config.hpp"
#include "grcox/simulation.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace grcox {

struct CellResult {
  ScenarioConfig config;
  double censor_bound = 0.0;
  SimulationResult result;
};

/// Runs every cell of a plan in grid order.
std::vector<CellResult> run_plan(const SimulationPlan& plan, int threads, std::ostream* log = nullptr);

/// scenario,censoring,beta_x_true,design,method,pct_bias,ese,re,ase,mse,cp,type1,fail_rate
void write_metrics_csv(std::ostream& out, const std::vector<CellResult>& cells);
void write_misclassification_csv(std::ostream& out, const std::vector<CellResult>& cells);
/// One row per (cell, replicate, method) with the coefficient estimates and SEs.
void write_replicates_csv(std::ostream& out, const std::vector<CellResult>& cells);

Json simulation_manifest(const SimulationPlan& plan, const std::vector<CellResult>& cells, int threads,
                         double seconds);

struct SimulateOptions {
  std::string config;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
  std::optional<std::string> profile;
  std::optional<int> replicates;  // overrides the config (and profile) replicate count
  std::optional<int> export_replicate;  // also writes that replicate's cohort and sample per cell
};

struct AnalyzeOptions {
  std::string data;
  std::string map;
  std::vector<std::string> methods;
  std::optional<std::string> pi_column;
  std::optional<std::string> design;
  std::uint64_t seed = 0;
  int replicate = 0;  // stream index; matches the simulation streams of that replicate
  std::optional<std::string> out_dir;
  int m_count = 10;
  int l_count = 50;
  std::string fcs_vars = "delta-u-x";
  bool intercept_calibration = true;
};

struct DesignOptions {
  std::string data;
  std::string spec;
  std::uint64_t seed = 0;
  std::string out;
};

struct DiagnoseOptions {
  std::string config;
  std::string out;
};

/// Each command returns the process exit code: 0 on success, 2 for invalid input, 1 otherwise.
int cmd_simulate(const SimulateOptions& options, std::ostream& log);
int cmd_analyze(const AnalyzeOptions& options, std::ostream& log);
int cmd_design(const DesignOptions& options, std::ostream& log);
int cmd_diagnose(const DiagnoseOptions& options, std::ostream& log);

/// Column map of the cohort files written by `simulate --export-replicate`.
CohortColumns export_columns();

}  // namespace grcox
