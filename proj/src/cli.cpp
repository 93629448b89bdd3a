#include "collapsim/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "collapsim/curves.hpp"
#include "collapsim/dp_numeric.hpp"
#include "collapsim/errors.hpp"
#include "collapsim/estimator.hpp"
#include "collapsim/mc.hpp"
#include "collapsim/svg.hpp"
#include "collapsim/tagg.hpp"
#include "collapsim/version.hpp"

namespace collapsim {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

RunMetadata make_meta(const ConfigDocument& config, const std::string& command,
                      std::uint64_t seed) {
  return RunMetadata{kToolVersion, command, config.config_hash, seed};
}

void add_column(OutputTable& table, const std::string& name,
                std::vector<double> values) {
  table.columns.push_back({name, std::move(values)});
}

// Column of the abscissa length, UNfilled entries NaN, for empirical curves
// that may be absent (e.g. no trajectory reached an outcome).
std::vector<double> padded(const std::vector<double>& values,
                           std::size_t n) {
  if (values.size() == n) return values;
  return std::vector<double>(n, kNan);
}

std::vector<double> mask_as_doubles(const std::vector<std::uint8_t>& mask) {
  std::vector<double> out(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    out[i] = static_cast<double>(mask[i]);
  }
  return out;
}

void add_kv(OutputTable& table, const std::string& key, const std::string& v) {
  table.extra_meta.emplace_back(key, v);
}

void add_kv(OutputTable& table, const std::string& key, double v) {
  table.extra_meta.emplace_back(key, format_g9(v));
}

double outcome_code(Outcome o) {
  switch (o) {
    case Outcome::kMov:
      return 1.0;
    case Outcome::kNotMov:
      return 0.0;
    default:
      return -1.0;
  }
}

}  // namespace

OutputBundle cmd_validate(const ConfigDocument& config) {
  const ExperimentScenario& sc = config.scenario;
  OutputBundle bundle;
  bundle.meta = make_meta(config, "validate", config.simulation.master_seed);
  OutputTable table;
  table.basename = "validate";
  table.meta = bundle.meta;
  table.abscissa_name = "t";
  add_kv(table, "config_hash", config_hash_hex(config.config_hash));
  add_kv(table, "capacitance_F", sc.capacitance());
  add_kv(table, "time_constant_s", sc.time_constant());
  add_kv(table, "plateau_displacement_m", sc.plateau_displacement());
  BranchWeights w = sc.weights();
  add_kv(table, "w_mov", w.w_mov);
  add_kv(table, "w_not_mov", w.w_not_mov);
  add_kv(table, "horizon_s", sc.grid.horizon);
  add_kv(table, "n_bins", static_cast<double>(sc.grid.n_bins));
  add_kv(table, "n_trajectories",
         static_cast<double>(config.simulation.n_trajectories));
  add_kv(table, "master_seed",
         std::to_string(config.simulation.master_seed));
  add_kv(table, "tagg_section", config.tagg ? "present" : "absent");
  bundle.tables.push_back(std::move(table));
  return bundle;
}

OutputBundle cmd_dp_energy(const ConfigDocument& config,
                           const DpEnergyFlags& flags) {
  const ExperimentScenario& sc = config.scenario;
  OutputBundle bundle;
  bundle.meta = make_meta(config, "dp-energy", 0);

  double k = dp_quadratic_coefficient(sc.piezo, sc.mirror, sc.constants);
  double ds = flags.ds >= 0.0 ? flags.ds : sc.plateau_displacement();

  OutputTable table;
  table.basename = "dp_energy";
  table.meta = bundle.meta;
  table.abscissa_name = "ds";
  table.abscissa = {ds};
  add_column(table, "k", {k});
  add_kv(table, "k_J_per_m2", k);
  if (!flags.coefficient_only) {
    double e_smeared = k * ds * ds;
    double xi = micro_enhancement(ds, sc.model.enhancement);
    double e_pf = xi * e_smeared;
    double g_smeared = decay_rate(e_smeared, sc.model.gamma_factor,
                                  sc.constants);
    double g_pf = decay_rate(e_pf, sc.model.gamma_factor, sc.constants);
    add_column(table, "E_dp_smeared", {e_smeared});
    add_column(table, "E_dp_parameter_free", {e_pf});
    add_column(table, "gamma_smeared", {g_smeared});
    add_column(table, "gamma_parameter_free", {g_pf});
    add_kv(table, "ds_m", ds);
    add_kv(table, "E_dp_smeared_J", e_smeared);
    add_kv(table, "E_dp_parameter_free_J", e_pf);
    add_kv(table, "gamma_smeared_per_s", g_smeared);
    add_kv(table, "gamma_parameter_free_per_s", g_pf);
  }
  bundle.tables.push_back(std::move(table));

  if (flags.numeric) {
    // Voxel-evaluator cross-check of the closed form, on the mirror disc
    // (the piezo term of the closed form models a ramped internal strain,
    // not the rigid displacement the voxel evaluator computes, so only the
    // mirror term is directly comparable).
    double k_mirror_closed =
        2.0 * kPi * sc.constants.G * sc.mirror.density * sc.mirror.density *
        sc.mirror.thickness * kPi * sc.mirror.radius * sc.mirror.radius *
        (1.0 + 0.64 * sc.mirror.thickness / sc.mirror.radius);
    std::vector<MassBody> mirror{MassBody::cylinder(
        sc.mirror.radius, sc.mirror.thickness, sc.mirror.density)};
    // Fit displacements are sized to the disc, not to --ds: the coefficient
    // is displacement-independent in the quadratic regime, and actuation-
    // scale (nm) displacements change the pair energy by less than double
    // round-off against the self-energy.
    double base = sc.mirror.thickness / 50.0;
    std::vector<double> samples{0.25 * base, 0.4375 * base, 0.625 * base,
                                0.8125 * base, base};

    static const int kLadder[] = {8, 12, 16, 24, 32, 48, 64, 96, 128};
    std::vector<double> resolutions;
    for (int r : kLadder) {
      if (r < flags.voxels) resolutions.push_back(r);
    }
    resolutions.push_back(flags.voxels);

    OutputTable conv;
    conv.basename = "dp_convergence";
    conv.meta = bundle.meta;
    conv.abscissa_name = "voxels";
    conv.abscissa = resolutions;
    std::vector<double> k_fit, ratio, residual, limited;
    for (double r : resolutions) {
      QuadratureConfig q;
      q.voxel_count_per_axis = static_cast<int>(r);
      q.refinement_levels = 1;
      QuadraticFit fit = fit_quadratic_coefficient(mirror, samples, q);
      k_fit.push_back(fit.k);
      ratio.push_back(fit.k / k_mirror_closed);
      residual.push_back(fit.max_relative_residual);
      limited.push_back(fit.resolution_limited ? 1.0 : 0.0);
    }
    add_column(conv, "k_fit_mirror", k_fit);
    add_column(conv, "ratio_to_closed_form_mirror", ratio);
    add_column(conv, "max_relative_residual", residual);
    add_column(conv, "resolution_limited", limited);
    add_kv(conv, "k_closed_form_mirror_J_per_m2", k_mirror_closed);
    add_kv(conv, "k_fit_mirror_J_per_m2", k_fit.back());
    add_kv(conv, "fit_body", "mirror");
    bundle.tables.push_back(std::move(conv));
  }
  return bundle;
}

OutputBundle cmd_curves(const ConfigDocument& config,
                        const CurvesFlags& flags) {
  ExperimentScenario sc = config.scenario;
  if (!flags.model_override.empty()) {
    if (flags.model_override == "smeared") {
      sc.model.kind = ModelKind::kSmeared;
    } else if (flags.model_override == "parameter-free") {
      sc.model.kind = ModelKind::kParameterFree;
    } else if (flags.model_override == "custom") {
      if (sc.model.table.empty()) {
        throw ConfigError(
            "model.table_path: required for --model custom");
      }
      sc.model.kind = ModelKind::kCustomTable;
    } else {
      throw ConfigError("curves --model: unknown model '" +
                        flags.model_override + "'");
    }
  }
  BranchWeights w = sc.weights();
  CurveSet cs = make_curve_set(sc, w);
  RateCurve pd_mean = percent_deviation(cs.mean_to_dc, cs.zero);
  RateCurve pd_dc = percent_deviation(cs.dark_count, cs.zero);

  OutputBundle bundle;
  bundle.meta = make_meta(config, "curves", 0);
  OutputTable table;
  table.basename = "curves";
  table.meta = bundle.meta;
  table.abscissa_name = "t";
  table.abscissa = sc.grid.centers();
  add_column(table, "zero", cs.zero.values);
  add_column(table, "dark_count", cs.dark_count.values);
  add_column(table, "superposed", cs.superposed.values);
  add_column(table, "mean_all", cs.mean_all.values);
  add_column(table, "mean_to_dc", cs.mean_to_dc.values);
  add_column(table, "prob_to_mov", cs.prob_to_mov.values);
  add_column(table, "survival", cs.survival.values);
  add_column(table, "displacement", cs.displacement.values);
  add_column(table, "percent_dev_mean_to_dc", pd_mean.values);
  add_column(table, "percent_dev_dark_count", pd_dc.values);
  const char* kind = sc.model.kind == ModelKind::kSmeared ? "smeared"
                     : sc.model.kind == ModelKind::kParameterFree
                         ? "parameter-free"
                         : "custom-table";
  add_kv(table, "model", kind);
  add_kv(table, "time_constant_s", sc.time_constant());
  add_kv(table, "plateau_displacement_m", sc.plateau_displacement());
  add_kv(table, "w_mov", w.w_mov);
  bundle.tables.push_back(std::move(table));
  return bundle;
}

OutputBundle cmd_simulate(const ConfigDocument& config,
                          const SimulateFlags& flags) {
  const ExperimentScenario& sc = config.scenario;
  BranchWeights w = sc.weights();
  std::int64_t n = flags.trajectories > 0 ? flags.trajectories
                                          : config.simulation.n_trajectories;
  McOptions options;
  options.keep_trajectories = flags.dump_trajectories;
  EnsembleSummary summary =
      run_ensemble(sc, w, n, {config.simulation.master_seed}, options);

  OutputBundle bundle;
  bundle.meta = make_meta(config, "simulate", config.simulation.master_seed);
  OutputTable table;
  table.basename = "summary";
  table.meta = bundle.meta;
  table.abscissa_name = "t";
  table.abscissa = sc.grid.centers();
  std::size_t nb = table.abscissa.size();
  add_column(table, "mean_all", padded(summary.mean_all.values, nb));
  add_column(table, "mean_all_stderr",
             padded(summary.mean_all.stderr_values, nb));
  add_column(table, "mean_to_dc", padded(summary.mean_to_dc.values, nb));
  add_column(table, "mean_to_dc_stderr",
             padded(summary.mean_to_dc.stderr_values, nb));
  add_column(table, "mean_to_zero", padded(summary.mean_to_zero.values, nb));
  add_column(table, "mean_to_zero_stderr",
             padded(summary.mean_to_zero.stderr_values, nb));
  add_kv(table, "n_trajectories", static_cast<double>(n));
  add_kv(table, "n_mov", static_cast<double>(summary.outcome_counts.n_mov));
  add_kv(table, "n_not_mov",
         static_cast<double>(summary.outcome_counts.n_not_mov));
  add_kv(table, "n_none", static_cast<double>(summary.outcome_counts.n_none));
  add_kv(table, "median_collapse_time_s",
         summary.median_collapse_time.value_or(kNan));
  add_kv(table, "w_mov", w.w_mov);
  bundle.tables.push_back(std::move(table));

  if (flags.dump_trajectories) {
    OutputTable traj;
    traj.basename = "trajectories";
    traj.meta = bundle.meta;
    traj.abscissa_name = "seed_id";
    std::vector<double> collapse, outcome;
    for (const Trajectory& t : summary.trajectories) {
      traj.abscissa.push_back(static_cast<double>(t.seed_id));
      collapse.push_back(t.collapse_time.value_or(kNan));
      outcome.push_back(outcome_code(t.outcome));
    }
    add_column(traj, "collapse_time", std::move(collapse));
    add_column(traj, "outcome", std::move(outcome));
    add_kv(traj, "outcome_codes", "1=mov 0=not_mov -1=none");
    bundle.tables.push_back(std::move(traj));
  }
  return bundle;
}

OutputBundle cmd_estimate(const ConfigDocument& config,
                          const EstimateFlags& flags) {
  if (flags.window != 0 && (flags.window < 3 || flags.window % 2 == 0)) {
    throw ConfigError("estimate --window: must be an odd integer >= 3");
  }
  if (flags.bootstrap > 0 && !flags.from_path.empty()) {
    throw ConfigError(
        "estimate --bootstrap: requires an in-process simulation (omit "
        "--from)");
  }

  ExperimentScenario sc = config.scenario;
  BranchWeights w = sc.weights();
  GammaEstimate est;
  std::uint64_t seed = 0;
  std::int64_t n_mov = -1;

  OutputBundle bundle;
  if (!flags.from_path.empty()) {
    CsvData csv = read_csv_file(flags.from_path);
    const std::vector<double>* t = csv.find("t");
    if (t == nullptr) {
      throw ConfigError("estimate input '" + flags.from_path +
                        "': required column 't' missing");
    }
    const std::vector<double>* mean = csv.find("mean_to_dc");
    if (mean == nullptr) {
      throw ConfigError("estimate input '" + flags.from_path +
                        "': required column 'mean_to_dc' missing");
    }
    if (t->size() < 2) {
      throw ConfigError("estimate input '" + flags.from_path +
                        "': need at least 2 rows");
    }
    double dt = (*t)[1] - (*t)[0];
    if (dt <= 0.0) {
      throw ConfigError("estimate input '" + flags.from_path +
                        "': time column must increase");
    }
    double horizon = dt * static_cast<double>(t->size());
    for (std::size_t i = 0; i < t->size(); ++i) {
      double expected = (static_cast<double>(i) + 0.5) * dt;
      if (std::abs((*t)[i] - expected) > 1e-6 * horizon) {
        throw ConfigError(
            "estimate input '" + flags.from_path +
            "': time column is not a uniform bin-center grid");
      }
    }
    sc.grid = TimeGrid{horizon, static_cast<int>(t->size())};

    RateCurve measured;
    measured.grid = sc.grid;
    measured.values = *mean;
    if (const std::vector<double>* se = csv.find("mean_to_dc_stderr")) {
      measured.stderr_values = *se;
    }
    RateCurve dc, zero;
    const std::vector<double>* dc_col = csv.find("dark_count");
    const std::vector<double>* zero_col = csv.find("zero");
    if (dc_col != nullptr && zero_col != nullptr) {
      dc.grid = sc.grid;
      dc.values = *dc_col;
      zero.grid = sc.grid;
      zero.values = *zero_col;
    } else {
      dc = curve_dark_count(sc);
      zero = curve_zero(sc);
    }
    est = invert_mean_to_dc(measured, dc, zero, w.w_not_mov);
  } else {
    seed = config.simulation.master_seed;
    McOptions options;
    options.keep_trajectories = flags.bootstrap > 0;
    EnsembleSummary summary = run_ensemble(
        sc, w, config.simulation.n_trajectories, {seed}, options);
    n_mov = summary.outcome_counts.n_mov;
    if (flags.bootstrap > 0) {
      BootstrapOptions opts;
      opts.n_resamples = flags.bootstrap;
      opts.resample_seed = seed;
      est = bootstrap_bands(summary.trajectories, sc, w, opts);
    } else {
      est = invert_mean_to_dc(summary.mean_to_dc, curve_dark_count(sc),
                              curve_zero(sc), w.w_not_mov);
    }
  }
  if (flags.window != 0) est = smooth_rate(est, flags.window);

  double gamma_fit = constant_rate_fit(est);
  ModelGoodness goodness = model_goodness(est, config.scenario.model, sc);

  bundle.meta = make_meta(config, "estimate", seed);
  OutputTable table;
  table.basename = "estimate";
  table.meta = bundle.meta;
  table.abscissa_name = "t";
  table.abscissa = sc.grid.centers();
  std::size_t nb = table.abscissa.size();
  add_column(table, "cumulative", est.cumulative);
  add_column(table, "rate", padded(est.rate, nb));
  add_column(table, "mask", mask_as_doubles(est.mask));
  add_column(table, "ci_lo",
             est.ci_lower ? *est.ci_lower : std::vector<double>(nb, kNan));
  add_column(table, "ci_hi",
             est.ci_upper ? *est.ci_upper : std::vector<double>(nb, kNan));
  add_kv(table, "input",
         flags.from_path.empty() ? "simulation" : flags.from_path);
  if (n_mov >= 0) add_kv(table, "n_mov", static_cast<double>(n_mov));
  add_kv(table, "n_unmasked", static_cast<double>(est.n_unmasked()));
  if (flags.window != 0) add_kv(table, "clip_fraction", est.clip_fraction);
  add_kv(table, "constant_fit_gamma_per_s", gamma_fit);
  add_kv(table, "goodness_chi_squared", goodness.chi_squared);
  add_kv(table, "goodness_n_bins", static_cast<double>(goodness.n_bins));
  add_kv(table, "goodness_reduced", goodness.reduced);
  bundle.tables.push_back(std::move(table));
  return bundle;
}

OutputBundle cmd_tagg(const ConfigDocument& config, const TaggFlags& flags) {
  if (!config.tagg) {
    throw ConfigError("tagg: section missing in configuration");
  }
  MZScenario mz = *config.tagg;
  if (flags.inverted) mz.inverted = true;
  MZCurves curves = mz_curves(mz);
  RateCurve eq = mz_mean_to_dc_plus(mz);
  MZWeights w = mz_weights(mz.splitter_T2, mz.splitter_R2, mz.eta_plus,
                           mz.eta_minus);

  OutputBundle bundle;
  bundle.meta = make_meta(config, "tagg",
                          flags.trajectories > 0
                              ? config.simulation.master_seed
                              : 0);
  OutputTable table;
  table.basename = "tagg";
  table.meta = bundle.meta;
  table.abscissa_name = "t";
  table.abscissa = mz.grid.centers();
  std::size_t nb = table.abscissa.size();
  add_column(table, "dc_plus", curves.dc_plus.values);
  add_column(table, "zero", curves.zero.values);
  add_column(table, "dc_minus", curves.dc_minus.values);
  add_column(table, "mean_to_dc_plus", eq.values);
  add_kv(table, "inverted", mz.inverted ? "true" : "false");
  add_kv(table, "w_plus", w.w_plus);
  add_kv(table, "w_minus", w.w_minus);
  add_kv(table, "w_zero", w.w_zero);

  if (flags.trajectories > 0) {
    MZEnsembleSummary summary = mz_run_ensemble(
        mz, flags.trajectories, {config.simulation.master_seed});
    add_column(table, "mc_mean_to_dc_plus",
               padded(summary.mean_to_dc_plus.values, nb));
    add_column(table, "mc_mean_to_dc_plus_stderr",
               padded(summary.mean_to_dc_plus.stderr_values, nb));
    add_kv(table, "n_trajectories",
           static_cast<double>(summary.n_trajectories));
    add_kv(table, "n_plus", static_cast<double>(summary.branch_counts[0]));
    add_kv(table, "n_minus", static_cast<double>(summary.branch_counts[1]));
    add_kv(table, "n_zero", static_cast<double>(summary.branch_counts[2]));
    add_kv(table, "n_unresolved",
           static_cast<double>(summary.n_unresolved));
  }
  bundle.tables.push_back(std::move(table));
  return bundle;
}

namespace {

const OutputTable* find_table(const OutputBundle& bundle,
                              const std::string& basename) {
  for (const OutputTable& t : bundle.tables) {
    if (t.basename == basename) return &t;
  }
  return nullptr;
}

const std::vector<double>* find_column(const OutputTable& table,
                                       const std::string& name) {
  for (const OutputColumn& c : table.columns) {
    if (c.name == name) return &c.values;
  }
  return nullptr;
}

std::vector<double> scaled(const std::vector<double>& v, double factor) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  return out;
}

}  // namespace

bool render_bundle_svg(const OutputBundle& bundle, std::string* out_name,
                       std::string* out_svg) {
  const std::string& command = bundle.meta.command;
  std::vector<SvgPanel> panels;
  if (command == "curves") {
    const OutputTable* t = find_table(bundle, "curves");
    if (t == nullptr) return false;
    std::vector<double> t_us = scaled(t->abscissa, 1e6);
    SvgPanel top{"conditional detection rate, deviation from the zero rate",
                 "t [us]", "deviation [%]", {}};
    top.series.push_back(
        {"mean to dark-count", t_us,
         scaled(*find_column(*t, "percent_dev_mean_to_dc"), 100.0), "",
         false});
    top.series.push_back(
        {"dark-count", t_us,
         scaled(*find_column(*t, "percent_dev_dark_count"), 100.0), "",
         true});
    SvgPanel bottom{"mirror displacement", "t [us]", "displacement [nm]", {}};
    bottom.series.push_back(
        {"displacement", t_us,
         scaled(*find_column(*t, "displacement"), 1e9), "", false});
    panels = {top, bottom};
    *out_name = "curves.svg";
  } else if (command == "simulate") {
    const OutputTable* t = find_table(bundle, "summary");
    if (t == nullptr) return false;
    std::vector<double> t_us = scaled(t->abscissa, 1e6);
    SvgPanel panel{"ensemble mean detection rates", "t [us]", "rate [1/s]",
                   {}};
    panel.series.push_back(
        {"mean all", t_us, *find_column(*t, "mean_all"), "", false});
    panel.series.push_back(
        {"mean to dc", t_us, *find_column(*t, "mean_to_dc"), "", false});
    panel.series.push_back(
        {"mean to zero", t_us, *find_column(*t, "mean_to_zero"), "", false});
    panels = {panel};
    *out_name = "summary.svg";
  } else if (command == "estimate") {
    const OutputTable* t = find_table(bundle, "estimate");
    if (t == nullptr) return false;
    std::vector<double> t_us = scaled(t->abscissa, 1e6);
    SvgPanel panel{"recovered cumulative decay", "t [us]",
                   "integrated rate [1]", {}};
    panel.series.push_back(
        {"cumulative", t_us, *find_column(*t, "cumulative"), "", false});
    const std::vector<double>& lo = *find_column(*t, "ci_lo");
    const std::vector<double>& hi = *find_column(*t, "ci_hi");
    bool has_bands = false;
    for (double v : lo) {
      if (std::isfinite(v)) {
        has_bands = true;
        break;
      }
    }
    if (has_bands) {
      panel.series.push_back({"2.5 percentile", t_us, lo, "#888888", true});
      panel.series.push_back({"97.5 percentile", t_us, hi, "#888888", true});
    }
    panels = {panel};
    *out_name = "estimate.svg";
  } else if (command == "tagg") {
    const OutputTable* t = find_table(bundle, "tagg");
    if (t == nullptr) return false;
    std::vector<double> t_us = scaled(t->abscissa, 1e6);
    SvgPanel panel{"two-arm detection rates", "t [us]", "rate [1/s]", {}};
    panel.series.push_back(
        {"dc plus", t_us, *find_column(*t, "dc_plus"), "", false});
    panel.series.push_back({"zero", t_us, *find_column(*t, "zero"), "", false});
    panel.series.push_back(
        {"dc minus", t_us, *find_column(*t, "dc_minus"), "", true});
    panel.series.push_back({"mean to dc plus", t_us,
                            *find_column(*t, "mean_to_dc_plus"), "", false});
    panels = {panel};
    *out_name = "tagg.svg";
  } else {
    return false;
  }
  *out_svg = render_svg_chart(panels);
  return true;
}

namespace {

void write_bundle(OutputBundle& bundle, const std::string& out_dir,
                  const std::string& format, bool svg) {
  for (const OutputTable& table : bundle.tables) {
    std::filesystem::path path(out_dir);
    path /= table.basename + (format == "json" ? ".json" : ".csv");
    write_file(path.string(),
               format == "json" ? render_json(table) : render_csv(table));
    bundle.written_files.push_back(path.string());
  }
  if (svg) {
    std::string name, content;
    if (render_bundle_svg(bundle, &name, &content)) {
      std::filesystem::path path(out_dir);
      path /= name;
      write_file(path.string(), content);
      bundle.written_files.push_back(path.string());
    }
  }
}

void report(const OutputBundle& bundle) {
  for (const OutputTable& table : bundle.tables) {
    for (const auto& [key, value] : table.extra_meta) {
      std::cout << key << " = " << value << "\n";
    }
  }
  for (const std::string& path : bundle.written_files) {
    std::cout << "wrote " << path << "\n";
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{
      "Simulation and analysis toolkit for a piezo-driven interferometric "
      "collapse-timing experiment"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = ".";
  std::string format = "csv";
  std::uint64_t seed = 0;
  bool svg = false;
  app.add_option("--config", config_path, "configuration file")->required();
  app.add_option("--set", sets, "override: section.key=value (repeatable)");
  app.add_option("--out", out_dir, "output directory (default: .)");
  app.add_option("--format", format, "output format")
      ->check(CLI::IsMember({"csv", "json"}));
  CLI::Option* seed_opt =
      app.add_option("--seed", seed, "override simulation.master_seed");
  app.add_flag("--svg", svg, "also write a chart for the command's data");

  CLI::App* sub_validate =
      app.add_subcommand("validate", "parse and check the configuration");

  CLI::App* sub_dp = app.add_subcommand(
      "dp-energy", "displacement self-energy and decay-rate figures");
  DpEnergyFlags dp_flags;
  sub_dp->add_option("--ds", dp_flags.ds,
                     "displacement in meters (default: plateau)")
      ->check(CLI::NonNegativeNumber);
  sub_dp->add_flag("--coefficient", dp_flags.coefficient_only,
                   "report the quadratic coefficient only");
  sub_dp->add_flag("--numeric", dp_flags.numeric,
                   "add the voxel-evaluator convergence table");
  sub_dp->add_option("--voxels", dp_flags.voxels,
                     "finest per-axis voxel count")
      ->check(CLI::Range(8, 256));

  CLI::App* sub_curves =
      app.add_subcommand("curves", "analytic detection-rate curves");
  CurvesFlags curves_flags;
  sub_curves->add_option("--model", curves_flags.model_override,
                         "override the configured model kind")
      ->check(CLI::IsMember({"smeared", "parameter-free", "custom"}));

  CLI::App* sub_sim =
      app.add_subcommand("simulate", "Monte Carlo trajectory ensemble");
  SimulateFlags sim_flags;
  sub_sim->add_option("--trajectories", sim_flags.trajectories,
                      "trajectory count (default: config)")
      ->check(CLI::PositiveNumber);
  sub_sim->add_flag("--dump-trajectories", sim_flags.dump_trajectories,
                    "also write one row per trajectory");

  CLI::App* sub_est = app.add_subcommand(
      "estimate", "recover the cumulative decay from measured curves");
  EstimateFlags est_flags;
  sub_est->add_option("--from", est_flags.from_path,
                      "input CSV (default: simulate in-process)");
  sub_est->add_option("--window", est_flags.window,
                      "odd smoothing window for the rate (0 = off)")
      ->check(CLI::NonNegativeNumber);
  sub_est->add_option("--bootstrap", est_flags.bootstrap,
                      "bootstrap resamples for percentile bands (0 = off)")
      ->check(CLI::NonNegativeNumber);

  CLI::App* sub_tagg =
      app.add_subcommand("tagg", "two-arm split-photon variant");
  TaggFlags tagg_flags;
  sub_tagg->add_flag("--inverted", tagg_flags.inverted,
                     "force the sign-inverted second arm");
  sub_tagg->add_option("--trajectories", tagg_flags.trajectories,
                       "competing-channels trajectory count (0 = none)")
      ->check(CLI::NonNegativeNumber);

  for (CLI::App* sub : {sub_validate, sub_dp, sub_curves, sub_sim, sub_est,
                        sub_tagg}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    std::vector<std::string> overrides = sets;
    if (seed_opt->count() > 0) {
      overrides.push_back("simulation.master_seed=" + std::to_string(seed));
    }
    ConfigDocument doc = load_config(config_path, overrides);

    OutputBundle bundle;
    if (sub_validate->parsed()) {
      bundle = cmd_validate(doc);
      std::cout << "configuration OK\n";
    } else if (sub_dp->parsed()) {
      bundle = cmd_dp_energy(doc, dp_flags);
    } else if (sub_curves->parsed()) {
      bundle = cmd_curves(doc, curves_flags);
    } else if (sub_sim->parsed()) {
      bundle = cmd_simulate(doc, sim_flags);
    } else if (sub_est->parsed()) {
      bundle = cmd_estimate(doc, est_flags);
    } else {
      bundle = cmd_tagg(doc, tagg_flags);
    }
    if (!sub_validate->parsed()) {
      write_bundle(bundle, out_dir, format, svg);
    }
    report(bundle);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace collapsim
