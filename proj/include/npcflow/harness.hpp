#pragma once

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "npcflow/flow.hpp"
#include "npcflow/functionals.hpp"
#include "npcflow/geometry.hpp"
#include "npcflow/report.hpp"
#include "npcflow/weak_convergence.hpp"

namespace npcflow {

using Json = nlohmann::ordered_json;

/// Config or preset problems; the CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- serialization (the config schema) -------------------------------------

Json space_to_json(const GeodesicSpace& space);
GeodesicSpace space_from_json(const Json& j);

Json point_to_json(const GeodesicSpace& space, const SpacePoint& p);
SpacePoint point_from_json(const GeodesicSpace& space, const Json& j);

Json functional_to_json(const ConvexFunctional& f);
ConvexFunctional functional_from_json(const Json& j);

Json set_to_json(const GeodesicSpace& space, const ConvexSetDescriptor& set);
ConvexSetDescriptor set_from_json(const GeodesicSpace& space, const Json& j);

// --- run configuration ------------------------------------------------------

struct CheckSpec {
  std::string name;
  Json params;  // validated, defaults filled by the runner
};

struct RunConfig {
  int schema_version = 1;
  std::uint64_t seed = 0;
  GeodesicSpace space;
  std::optional<ConvexFunctional> functional;
  std::vector<SpacePoint> initial_points;
  double horizon = 1.0;
  long n_per_unit = 256;
  std::vector<long> n_list;
  long samples = 65;
  double box_radius = 10.0;
  std::string output_dir = "run";
  std::vector<CheckSpec> checks;
  Json echo;  // normalized config, embedded in the manifest
};

/// Fail-closed parse: unknown keys anywhere reject the config.
RunConfig parse_config(const Json& j);
RunConfig load_config_file(const std::string& path);

// --- execution --------------------------------------------------------------

struct CheckOutcome {
  CheckReport report;
  Json extra;  // check-specific numbers (error tables, centers, ...)
};

struct RunManifest {
  Json config;
  std::string version;
  std::vector<CheckOutcome> outcomes;
  std::vector<std::string> artifacts;  // file names inside run_dir
  double total_seconds = 0.0;
  bool passed = false;
  std::string run_dir;

  Json to_json() const;
};

/// Executes the configured checks in order and writes manifest.json,
/// reports.json and, when a trajectory was computed (or force_trajectory is
/// set), trajectory.csv / trajectory.json under output_root/<output_dir>.
/// Deterministic for a fixed config, modulo the manifest timing fields.
RunManifest run(const RunConfig& config, const std::string& output_root,
                bool force_trajectory = false);

std::vector<std::string> suite_presets();
/// paper-core: the acceptance criteria; geometry: space certification plus the
/// projection toolkit; convergence: minimizer convergence and infimum checks.
std::vector<RunManifest> suite(const std::string& preset, const std::string& output_root);

/// Re-emits the reports of a finished run directory as reports.csv or
/// reports.json (pretty-printed copy).
void export_run(const std::string& run_dir, const std::string& format);

std::string trajectory_csv(const GeodesicSpace& space, const Trajectory& traj);
Json trajectory_to_json(const GeodesicSpace& space, const Trajectory& traj);

/// $NPCFLOW_OUT when set, otherwise "runs".
std::string default_output_root();

Json report_to_json(const CheckReport& report);

}  // namespace npcflow
