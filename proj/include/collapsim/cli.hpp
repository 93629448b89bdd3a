#pragma once

#include <cstdint>
#include <string>

#include "collapsim/config.hpp"
#include "collapsim/output.hpp"

namespace collapsim {

// Command implementations. Each builds the complete OutputBundle for one
// subcommand from a parsed configuration; file writing, format selection,
// and stdout reporting live in run_cli.

struct DpEnergyFlags {
  double ds = -1.0;              // meters; negative = plateau displacement
  bool coefficient_only = false; // report the quadratic coefficient only
  bool numeric = false;          // add the voxel-evaluator convergence table
  int voxels = 32;               // finest per-axis voxel count for --numeric
};
OutputBundle cmd_dp_energy(const ConfigDocument& config,
                           const DpEnergyFlags& flags);

struct CurvesFlags {
  // "", "smeared", "parameter-free", or "custom": overrides the configured
  // model kind ("custom" requires a loaded table).
  std::string model_override;
};
OutputBundle cmd_curves(const ConfigDocument& config, const CurvesFlags& flags);

struct SimulateFlags {
  std::int64_t trajectories = 0;  // 0 = config value
  bool dump_trajectories = false;
};
OutputBundle cmd_simulate(const ConfigDocument& config,
                          const SimulateFlags& flags);

struct EstimateFlags {
  std::string from_path;  // CSV input; empty = simulate in-process
  int window = 0;         // odd >= 3 enables rate smoothing; 0 = off
  int bootstrap = 0;      // resample count; 0 = no bands
};
OutputBundle cmd_estimate(const ConfigDocument& config,
                          const EstimateFlags& flags);

struct TaggFlags {
  bool inverted = false;          // force the inverted variant
  std::int64_t trajectories = 0;  // 0 = analytic curves only
};
OutputBundle cmd_tagg(const ConfigDocument& config, const TaggFlags& flags);

OutputBundle cmd_validate(const ConfigDocument& config);

// Presentation charts for a bundle produced by the commands above; returns
// false when the command has no chart. On success fills `out_name`
// (basename + ".svg") and `out_svg`.
bool render_bundle_svg(const OutputBundle& bundle, std::string* out_name,
                       std::string* out_svg);

// Full command-line surface. Exit codes: 0 success, 2 configuration or
// usage error, 3 numerical failure, 4 I/O failure.
int run_cli(int argc, const char* const* argv);

}  // namespace collapsim
