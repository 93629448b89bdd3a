#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "collapsim/scenario.hpp"
#include "collapsim/tagg.hpp"

namespace collapsim {

// Configuration text format: INI-style sections of `key = value` lines with
// `#`/`;` comments. Sections and keys are fixed (strict mode: unknown names
// are rejected with a section.key path). Each field has one documented unit;
// values are plain numbers in that unit and are converted to SI on parse:
//
//   [photodiode]      V_B [V], V_E [V], R_di [ohm], eta [1]
//   [piezo]           d33 [pm/V], eps_r [1], r_p [mm], d_p [mm],
//                     rho_p [g/cm^3]
//   [mirror]          r_m [mm], d_m [mm], rho_m [g/cm^3]
//   [interferometer]  lambda [nm], alpha [1], beta [1], phi0_deg [degrees],
//                     N_in [1/s], T2 [1]
//   [circuit]         R [ohm]
//   [model]           kind (smeared | parameter-free | custom-table),
//                     gamma_factor [1], xi0 [1], sigma [angstrom],
//                     lattice_g [angstrom], table_path (CSV file: t [s],
//                     gamma [1/s])
//   [simulation]      horizon [us], n_bins [1], n_trajectories [1],
//                     master_seed [u64]
//   [tagg]            splitter_T2 [1], splitter_R2 [1], eta_plus [1],
//                     eta_minus [1], inverted (true | false),
//                     R_plus [ohm], R_minus [ohm],
//                     gamma_table_plus / gamma_table_minus / gamma_ps_table
//                     (CSV paths)
//
// Hardware sections are required; [model], [simulation], and [tagg]
// sub-fields have documented defaults ([tagg] itself is optional and the
// two-arm scenario exists only when the section is present).

struct SimulationDefaults {
  std::int64_t n_trajectories = 10000;
  std::uint64_t master_seed = 1;
};

struct ConfigDocument {
  ExperimentScenario scenario{};
  SimulationDefaults simulation{};
  std::optional<MZScenario> tagg;
  // Canonical SI serialization of every resolved field, one
  // `section.key=value` line per field in a fixed order; identical physics
  // yields identical text regardless of input formatting, key order,
  // comments, or whether a value was spelled out or defaulted.
  std::string canonical_text;
  std::uint64_t config_hash = 0;  // FNV-1a (64-bit) of canonical_text
};

// Parses configuration text. `overrides` are `section.key=value` strings
// applied on top of the text (exactly equivalent to editing the file);
// `base_dir` resolves relative table paths (empty = current directory).
// Throws ConfigError with a section.key path on any violation.
ConfigDocument parse_config(const std::string& text,
                            const std::vector<std::string>& overrides = {},
                            const std::string& base_dir = "");

// Reads and parses a configuration file; relative table paths resolve
// against the file's directory. Throws IoError if the file is unreadable.
ConfigDocument load_config(const std::string& path,
                           const std::vector<std::string>& overrides = {});

// Piecewise-linear rate table from a CSV file with columns t [s], gamma
// [1/s] (optional `t,gamma` header, `#` comments). Throws ConfigError on
// malformed content or an unreadable file.
RateTable load_rate_table(const std::string& path);

// 16-digit lowercase hex rendering of a config hash.
std::string config_hash_hex(std::uint64_t hash);

}  // namespace collapsim
