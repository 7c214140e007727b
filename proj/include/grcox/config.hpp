#pragma once

#include "grcox/csv_io.hpp"
#include "grcox/designs.hpp"
#include "grcox/simulation.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace grcox {

using Json = nlohmann::ordered_json;

/// A simulation config expanded into its grid of cells
/// (scenario x censoring x beta_x x design, in that nesting order).
struct SimulationPlan {
  std::string name;
  std::string profile;
  Json echo;  // the config with defaults filled in and the profile applied
  std::vector<ScenarioConfig> cells;
};

/// Every schema violation, each prefixed by its JSON path ("/grid/censoring/1: ...").
std::vector<std::string> config_issues(const Json& config);

/// Validates and expands. `profile` overrides the config's own profile when given.
/// Throws SchemaError listing every issue.
SimulationPlan parse_simulation_config(const Json& config, const std::optional<std::string>& profile = std::nullopt);

Json read_json_file(const std::string& path);

/// Design object as used inside configs and by the `design` command.
DesignSpec parse_design_spec(const Json& j, const std::string& path, std::vector<std::string>& issues);
Json design_to_json(const DesignSpec& spec);

/// {"x_star": [...], "z": [...], "u_star": ..., "delta_star": ..., "x": [...], "u": ..., "delta": ...,
///  "r": ..., "pi": ..., "id": ...}
CohortColumns parse_column_map(const Json& j);

/// GRCOX_THREADS and GRCOX_OUT_DIR.
std::optional<int> env_threads();
std::optional<std::string> env_out_dir();

}  // namespace grcox
