#include "collapsim/config.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "collapsim/errors.hpp"

namespace collapsim {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Cuts a '#' or ';' comment that starts the line or follows whitespace.
std::string strip_comment(const std::string& line) {
  for (std::size_t i = 0; i < line.size(); ++i) {
    if ((line[i] == '#' || line[i] == ';') &&
        (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
      return line.substr(0, i);
    }
  }
  return line;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> k = {
      {"photodiode", {"V_B", "V_E", "R_di", "eta"}},
      {"piezo", {"d33", "eps_r", "r_p", "d_p", "rho_p"}},
      {"mirror", {"r_m", "d_m", "rho_m"}},
      {"interferometer", {"lambda", "alpha", "beta", "phi0_deg", "N_in", "T2"}},
      {"circuit", {"R"}},
      {"model",
       {"kind", "gamma_factor", "xi0", "sigma", "lattice_g", "table_path"}},
      {"simulation", {"horizon", "n_bins", "n_trajectories", "master_seed"}},
      {"tagg",
       {"splitter_T2", "splitter_R2", "eta_plus", "eta_minus", "inverted",
        "R_plus", "R_minus", "gamma_table_plus", "gamma_table_minus",
        "gamma_ps_table"}},
  };
  return k;
}

using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

void insert_key(RawConfig& rc, const std::string& section,
                const std::string& key, const std::string& value,
                bool reject_duplicate, int line) {
  auto sec_it = known_keys().find(section);
  if (sec_it == known_keys().end()) {
    throw ConfigError("unknown section [" + section + "]" +
                      (line > 0 ? " (line " + std::to_string(line) + ")" : ""));
  }
  if (sec_it->second.find(key) == sec_it->second.end()) {
    throw ConfigError(section + "." + key + ": unknown key");
  }
  auto [it, inserted] = rc[section].try_emplace(key, value);
  if (!inserted) {
    if (reject_duplicate) {
      throw ConfigError(section + "." + key + ": duplicate key (line " +
                        std::to_string(line) + ")");
    }
    it->second = value;
  }
}

RawConfig parse_raw(const std::string& text) {
  RawConfig rc;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) +
                          ": unterminated section header");
      }
      section = trim(s.substr(1, s.size() - 2));
      if (known_keys().find(section) == known_keys().end()) {
        throw ConfigError("unknown section [" + section + "] (line " +
                          std::to_string(lineno) + ")");
      }
      rc.try_emplace(section);
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": expected 'key = value' or '[section]'");
    }
    std::string key = trim(s.substr(0, eq));
    std::string value = trim(s.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": empty key or value");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) +
                        ": key outside any [section]");
    }
    insert_key(rc, section, key, value, /*reject_duplicate=*/true, lineno);
  }
  return rc;
}

void apply_override(RawConfig& rc, const std::string& spec) {
  std::size_t eq = spec.find('=');
  std::size_t dot = spec.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + spec + "': expected section.key=value");
  }
  std::string section = trim(spec.substr(0, dot));
  std::string key = trim(spec.substr(dot + 1, eq - dot - 1));
  std::string value = trim(spec.substr(eq + 1));
  if (section.empty() || key.empty() || value.empty()) {
    throw ConfigError("override '" + spec + "': expected section.key=value");
  }
  insert_key(rc, section, key, value, /*reject_duplicate=*/false, 0);
}

const std::string* find_raw(const RawConfig& rc, const std::string& section,
                            const std::string& key) {
  auto s = rc.find(section);
  if (s == rc.end()) return nullptr;
  auto k = s->second.find(key);
  if (k == s->second.end()) return nullptr;
  return &k->second;
}

std::string require_raw(const RawConfig& rc, const std::string& section,
                        const std::string& key) {
  const std::string* v = find_raw(rc, section, key);
  if (v == nullptr) {
    throw ConfigError(section + "." + key + ": missing required key");
  }
  return *v;
}

double parse_number(const std::string& raw, const std::string& path) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(raw.c_str(), &end);
  if (end == raw.c_str() || *end != '\0') {
    throw ConfigError(path + ": invalid number '" + raw + "'");
  }
  if (!std::isfinite(v)) {
    throw ConfigError(path + ": value must be finite");
  }
  return v;
}

// Required numeric field: value * scale (unit conversion to SI).
double read_num(const RawConfig& rc, const std::string& section,
                const std::string& key, double scale) {
  return parse_number(require_raw(rc, section, key), section + "." + key) *
         scale;
}

double read_num_or(const RawConfig& rc, const std::string& section,
                   const std::string& key, double scale, double fallback) {
  const std::string* v = find_raw(rc, section, key);
  if (v == nullptr) return fallback;
  return parse_number(*v, section + "." + key) * scale;
}

long long read_int_or(const RawConfig& rc, const std::string& section,
                      const std::string& key, long long fallback) {
  const std::string* v = find_raw(rc, section, key);
  if (v == nullptr) return fallback;
  const std::string path = section + "." + key;
  errno = 0;
  char* end = nullptr;
  long long n = std::strtoll(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0' || errno == ERANGE) {
    throw ConfigError(path + ": invalid integer '" + *v + "'");
  }
  return n;
}

std::uint64_t read_u64_or(const RawConfig& rc, const std::string& section,
                          const std::string& key, std::uint64_t fallback) {
  const std::string* v = find_raw(rc, section, key);
  if (v == nullptr) return fallback;
  const std::string path = section + "." + key;
  if (!v->empty() && (*v)[0] == '-') {
    throw ConfigError(path + ": must be a nonnegative integer");
  }
  errno = 0;
  char* end = nullptr;
  unsigned long long n = std::strtoull(v->c_str(), &end, 10);
  if (end == v->c_str() || *end != '\0' || errno == ERANGE) {
    throw ConfigError(path + ": invalid integer '" + *v + "'");
  }
  return n;
}

bool read_bool_or(const RawConfig& rc, const std::string& section,
                  const std::string& key, bool fallback) {
  const std::string* v = find_raw(rc, section, key);
  if (v == nullptr) return fallback;
  if (*v == "true") return true;
  if (*v == "false") return false;
  throw ConfigError(section + "." + key + ": expected true or false (got '" +
                    *v + "')");
}

void check_range(bool ok, const std::string& path, const std::string& rule,
                 double got) {
  if (!ok) {
    throw ConfigError(path + ": " + rule + " (got " + fmt17(got) + ")");
  }
}

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  std::filesystem::path fp(p);
  if (fp.is_relative() && !base_dir.empty()) {
    fp = std::filesystem::path(base_dir) / fp;
  }
  return fp.string();
}

std::string serialize_table(const RateTable& table) {
  std::string out;
  for (std::size_t i = 0; i < table.t.size(); ++i) {
    if (i > 0) out += ";";
    out += fmt17(table.t[i]) + ":" + fmt17(table.gamma[i]);
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

const char* kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kSmeared:
      return "smeared";
    case ModelKind::kParameterFree:
      return "parameter-free";
    default:
      return "custom-table";
  }
}

}  // namespace

RateTable load_rate_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("rate table '" + path + "': cannot read file");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  RateTable table;
  std::istringstream text(buffer.str());
  std::string line;
  int lineno = 0;
  bool saw_header = false;
  while (std::getline(text, line)) {
    ++lineno;
    std::string s = trim(strip_comment(line));
    if (s.empty()) continue;
    std::size_t comma = s.find(',');
    if (comma == std::string::npos) {
      throw ConfigError("rate table '" + path + "' line " +
                        std::to_string(lineno) + ": expected 't,gamma'");
    }
    std::string a = trim(s.substr(0, comma));
    std::string b = trim(s.substr(comma + 1));
    if (table.t.empty() && !saw_header && a == "t" && b == "gamma") {
      saw_header = true;
      continue;
    }
    const std::string where =
        "rate table '" + path + "' line " + std::to_string(lineno);
    table.t.push_back(parse_number(a, where));
    table.gamma.push_back(parse_number(b, where));
  }
  if (table.t.empty()) {
    throw ConfigError("rate table '" + path + "': no data rows");
  }
  try {
    table.validate();
  } catch (const std::exception& e) {
    throw ConfigError("rate table '" + path + "': " + std::string(e.what()));
  }
  return table;
}

std::string config_hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

ConfigDocument parse_config(const std::string& text,
                            const std::vector<std::string>& overrides,
                            const std::string& base_dir) {
  RawConfig rc = parse_raw(text);
  for (const std::string& o : overrides) apply_override(rc, o);

  ConfigDocument doc;
  ExperimentScenario& sc = doc.scenario;

  double v_b = read_num(rc, "photodiode", "V_B", 1.0);
  double v_e = read_num(rc, "photodiode", "V_E", 1.0);
  double r_di = read_num(rc, "photodiode", "R_di", 1.0);
  double eta = read_num(rc, "photodiode", "eta", 1.0);
  check_range(v_b >= 0.0, "photodiode.V_B", "must be >= 0", v_b);
  check_range(v_e > 0.0, "photodiode.V_E", "must be > 0", v_e);
  check_range(r_di >= 0.0, "photodiode.R_di", "must be >= 0", r_di);
  check_range(eta >= 0.0 && eta <= 1.0, "photodiode.eta",
              "must lie in [0, 1]", eta);
  sc.photodiode = {v_b, v_e, r_di, eta};

  double d33 = read_num(rc, "piezo", "d33", 1e-12);       // pm/V -> m/V
  double eps_r = read_num(rc, "piezo", "eps_r", 1.0);
  double r_p = read_num(rc, "piezo", "r_p", 1e-3);        // mm -> m
  double d_p = read_num(rc, "piezo", "d_p", 1e-3);        // mm -> m
  double rho_p = read_num(rc, "piezo", "rho_p", 1000.0);  // g/cm^3 -> kg/m^3
  check_range(d33 >= 0.0, "piezo.d33", "must be >= 0", d33 * 1e12);
  check_range(eps_r > 0.0, "piezo.eps_r", "must be > 0", eps_r);
  check_range(r_p > 0.0, "piezo.r_p", "must be > 0", r_p * 1e3);
  check_range(d_p > 0.0, "piezo.d_p", "must be > 0", d_p * 1e3);
  check_range(rho_p > 0.0, "piezo.rho_p", "must be > 0", rho_p / 1000.0);
  sc.piezo = {d33, eps_r, r_p, d_p, rho_p};

  double r_m = read_num(rc, "mirror", "r_m", 1e-3);
  double d_m = read_num(rc, "mirror", "d_m", 1e-3);
  double rho_m = read_num(rc, "mirror", "rho_m", 1000.0);
  check_range(r_m > 0.0, "mirror.r_m", "must be > 0", r_m * 1e3);
  check_range(d_m > 0.0, "mirror.d_m", "must be > 0", d_m * 1e3);
  check_range(rho_m > 0.0, "mirror.rho_m", "must be > 0", rho_m / 1000.0);
  sc.mirror = {r_m, d_m, rho_m};

  double lambda = read_num(rc, "interferometer", "lambda", 1e-9);  // nm -> m
  double alpha = read_num(rc, "interferometer", "alpha", 1.0);
  double beta = read_num(rc, "interferometer", "beta", 1.0);
  double phi0 = read_num(rc, "interferometer", "phi0_deg", kPi / 180.0);
  double n_in = read_num(rc, "interferometer", "N_in", 1.0);
  double t2 = read_num(rc, "interferometer", "T2", 1.0);
  check_range(lambda > 0.0, "interferometer.lambda", "must be > 0",
              lambda * 1e9);
  check_range(alpha >= 0.0, "interferometer.alpha", "must be >= 0", alpha);
  check_range(beta >= 0.0, "interferometer.beta", "must be >= 0", beta);
  check_range(alpha + beta <= 1.0 + 1e-12, "interferometer.alpha",
              "alpha + beta must not exceed 1", alpha + beta);
  check_range(n_in >= 0.0, "interferometer.N_in", "must be >= 0", n_in);
  check_range(t2 >= 0.0 && t2 <= 1.0, "interferometer.T2",
              "must lie in [0, 1]", t2);
  sc.interferometer = {lambda, alpha, beta, phi0, n_in, t2};

  double r_series = read_num(rc, "circuit", "R", 1.0);
  check_range(r_series >= 0.0, "circuit.R", "must be >= 0", r_series);
  sc.drive = {r_series};

  std::string kind = "smeared";
  if (const std::string* v = find_raw(rc, "model", "kind")) kind = *v;
  if (kind == "smeared") {
    sc.model.kind = ModelKind::kSmeared;
  } else if (kind == "parameter-free") {
    sc.model.kind = ModelKind::kParameterFree;
  } else if (kind == "custom-table") {
    sc.model.kind = ModelKind::kCustomTable;
  } else {
    throw ConfigError(
        "model.kind: must be one of smeared, parameter-free, custom-table "
        "(got '" +
        kind + "')");
  }
  double gamma_factor = read_num_or(rc, "model", "gamma_factor", 1.0, 1.0);
  double xi0 = read_num_or(rc, "model", "xi0", 1.0, 100.0);
  double sigma = read_num_or(rc, "model", "sigma", 1e-10, 1e-11);  // A -> m
  double lattice_g =
      read_num_or(rc, "model", "lattice_g", 1e-10, 2e-10);  // A -> m
  check_range(gamma_factor > 0.0, "model.gamma_factor", "must be > 0",
              gamma_factor);
  check_range(xi0 >= 1.0, "model.xi0", "must be >= 1", xi0);
  check_range(sigma > 0.0, "model.sigma", "must be > 0", sigma * 1e10);
  check_range(lattice_g > 0.0, "model.lattice_g", "must be > 0",
              lattice_g * 1e10);
  check_range(sigma < 10.0 * lattice_g, "model.sigma",
              "must stay below 10 lattice constants", sigma * 1e10);
  sc.model.gamma_factor = gamma_factor;
  sc.model.enhancement = {lattice_g, sigma, xi0};
  const std::string* table_path = find_raw(rc, "model", "table_path");
  if (sc.model.kind == ModelKind::kCustomTable && table_path == nullptr) {
    throw ConfigError(
        "model.table_path: missing required key (kind = custom-table)");
  }
  if (table_path != nullptr) {
    sc.model.table = load_rate_table(resolve_path(base_dir, *table_path));
  }

  long long n_bins = read_int_or(rc, "simulation", "n_bins", 200);
  check_range(n_bins >= 2 && n_bins <= 1000000, "simulation.n_bins",
              "must lie in [2, 1000000]", static_cast<double>(n_bins));
  sc.grid.n_bins = static_cast<int>(n_bins);
  double horizon = read_num_or(rc, "simulation", "horizon", 1e-6, -1.0);
  if (horizon < 0.0) {
    horizon = default_horizon(sc);
    check_range(horizon > 0.0, "simulation.horizon",
                "no usable default for this model; set it explicitly",
                horizon);
  } else {
    check_range(horizon > 0.0, "simulation.horizon", "must be > 0",
                horizon * 1e6);
  }
  sc.grid.horizon = horizon;

  long long n_traj = read_int_or(rc, "simulation", "n_trajectories", 10000);
  check_range(n_traj >= 1, "simulation.n_trajectories", "must be >= 1",
              static_cast<double>(n_traj));
  doc.simulation.n_trajectories = n_traj;
  doc.simulation.master_seed = read_u64_or(rc, "simulation", "master_seed", 1);

  try {
    sc.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (rc.find("tagg") != rc.end()) {
    MZScenario mz;
    mz.constants = sc.constants;
    mz.interferometer = sc.interferometer;
    double st2 = read_num(rc, "tagg", "splitter_T2", 1.0);
    double sr2 = read_num(rc, "tagg", "splitter_R2", 1.0);
    double eta_p = read_num(rc, "tagg", "eta_plus", 1.0);
    double eta_m = read_num(rc, "tagg", "eta_minus", 1.0);
    check_range(st2 >= 0.0 && st2 <= 1.0, "tagg.splitter_T2",
                "must lie in [0, 1]", st2);
    check_range(sr2 >= 0.0 && sr2 <= 1.0, "tagg.splitter_R2",
                "must lie in [0, 1]", sr2);
    check_range(st2 + sr2 <= 1.0 + 1e-12, "tagg.splitter_T2",
                "splitter_T2 + splitter_R2 must not exceed 1", st2 + sr2);
    check_range(eta_p >= 0.0 && eta_p <= 1.0, "tagg.eta_plus",
                "must lie in [0, 1]", eta_p);
    check_range(eta_m >= 0.0 && eta_m <= 1.0, "tagg.eta_minus",
                "must lie in [0, 1]", eta_m);
    mz.splitter_T2 = st2;
    mz.splitter_R2 = sr2;
    mz.eta_plus = eta_p;
    mz.eta_minus = eta_m;
    mz.inverted = read_bool_or(rc, "tagg", "inverted", false);
    double r_plus = read_num_or(rc, "tagg", "R_plus", 1.0, r_series);
    double r_minus = read_num_or(rc, "tagg", "R_minus", 1.0, r_series);
    check_range(r_plus >= 0.0, "tagg.R_plus", "must be >= 0", r_plus);
    check_range(r_minus >= 0.0, "tagg.R_minus", "must be >= 0", r_minus);
    auto make_arm = [&](double resistance, const char* table_key) {
      ArmSpec arm;
      arm.photodiode = sc.photodiode;
      arm.piezo = sc.piezo;
      arm.mirror = sc.mirror;
      arm.drive = {resistance};
      arm.model = sc.model;
      if (const std::string* tp = find_raw(rc, "tagg", table_key)) {
        arm.model.kind = ModelKind::kCustomTable;
        arm.model.table = load_rate_table(resolve_path(base_dir, *tp));
      }
      return arm;
    };
    mz.arm_plus = make_arm(r_plus, "gamma_table_plus");
    mz.arm_minus = make_arm(r_minus, "gamma_table_minus");
    if (const std::string* tp = find_raw(rc, "tagg", "gamma_ps_table")) {
      mz.gamma_ps = load_rate_table(resolve_path(base_dir, *tp));
    }
    mz.grid = sc.grid;
    try {
      mz.validate();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config (tagg): ") + e.what());
    }
    doc.tagg = std::move(mz);
  }

  // Canonical SI serialization in a fixed field order; the hash of this text
  // is the provenance identity of the run.
  std::string canon;
  auto add = [&canon](const std::string& path, const std::string& value) {
    canon += path + "=" + value + "\n";
  };
  auto addn = [&add](const std::string& path, double v) { add(path, fmt17(v)); };
  addn("photodiode.V_B", sc.photodiode.breakdown_voltage);
  addn("photodiode.V_E", sc.photodiode.excess_bias);
  addn("photodiode.R_di", sc.photodiode.internal_resistance);
  addn("photodiode.eta", sc.photodiode.quantum_efficiency);
  addn("piezo.d33", sc.piezo.d33);
  addn("piezo.eps_r", sc.piezo.rel_permittivity);
  addn("piezo.r_p", sc.piezo.radius);
  addn("piezo.d_p", sc.piezo.thickness);
  addn("piezo.rho_p", sc.piezo.density);
  addn("mirror.r_m", sc.mirror.radius);
  addn("mirror.d_m", sc.mirror.thickness);
  addn("mirror.rho_m", sc.mirror.density);
  addn("interferometer.lambda", sc.interferometer.wavelength);
  addn("interferometer.alpha", sc.interferometer.alpha);
  addn("interferometer.beta", sc.interferometer.beta);
  addn("interferometer.phi0", sc.interferometer.phi0);
  addn("interferometer.N_in", sc.interferometer.input_rate);
  addn("interferometer.T2", sc.interferometer.coupling_transmission);
  addn("circuit.R", sc.drive.series_resistance);
  add("model.kind", kind_name(sc.model.kind));
  addn("model.gamma_factor", sc.model.gamma_factor);
  addn("model.xi0", sc.model.enhancement.xi0);
  addn("model.sigma", sc.model.enhancement.nuclei_spread);
  addn("model.lattice_g", sc.model.enhancement.lattice_constant);
  if (!sc.model.table.empty()) {
    add("model.table", serialize_table(sc.model.table));
  }
  addn("simulation.horizon", sc.grid.horizon);
  add("simulation.n_bins", std::to_string(sc.grid.n_bins));
  add("simulation.n_trajectories",
      std::to_string(doc.simulation.n_trajectories));
  add("simulation.master_seed", std::to_string(doc.simulation.master_seed));
  if (doc.tagg) {
    const MZScenario& mz = *doc.tagg;
    addn("tagg.splitter_T2", mz.splitter_T2);
    addn("tagg.splitter_R2", mz.splitter_R2);
    addn("tagg.eta_plus", mz.eta_plus);
    addn("tagg.eta_minus", mz.eta_minus);
    add("tagg.inverted", mz.inverted ? "1" : "0");
    addn("tagg.R_plus", mz.arm_plus.drive.series_resistance);
    addn("tagg.R_minus", mz.arm_minus.drive.series_resistance);
    add("tagg.gamma_table_plus",
        find_raw(rc, "tagg", "gamma_table_plus")
            ? serialize_table(mz.arm_plus.model.table)
            : "inherit");
    add("tagg.gamma_table_minus",
        find_raw(rc, "tagg", "gamma_table_minus")
            ? serialize_table(mz.arm_minus.model.table)
            : "inherit");
    add("tagg.gamma_ps",
        mz.gamma_ps.empty() ? "none" : serialize_table(mz.gamma_ps));
  }
  doc.canonical_text = std::move(canon);
  doc.config_hash = fnv1a(doc.canonical_text);
  return doc;
}

ConfigDocument load_config(const std::string& path,
                           const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read config file '" + path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  std::string base_dir = std::filesystem::path(path).parent_path().string();
  return parse_config(buffer.str(), overrides, base_dir);
}

}  // namespace collapsim
