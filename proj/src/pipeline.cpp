#include "pgev/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>

#include "pgev/climate.hpp"
#include "pgev/copula_sim.hpp"
#include "pgev/csv.hpp"
#include "pgev/eda.hpp"
#include "pgev/model_select.hpp"
#include "pgev/parallel.hpp"
#include "pgev/rng.hpp"

namespace pgev::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cell_text(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

spatial::VariogramMethod method_from(const std::string& s, const char* key) {
  const auto m = spatial::parse_variogram_method(s);
  if (!m) throw PipelineError(std::string(key) + ": expected LS, WLS or MLE, got '" + s + "'");
  return *m;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void log_line(const std::string& stage, const std::string& msg) {
  std::cerr << "[" << stage << "] " << msg << '\n';
}

fs::path require(const PipelineConfig& cfg, const char* name, const char* stage) {
  const fs::path p = cfg.out_dir / name;
  if (!fs::exists(p)) {
    throw PipelineError("missing artifact " + p.string() + ": run the `" + stage + "` stage first");
  }
  return p;
}

io::Grid stage_grid(const PipelineConfig& cfg) {
  return io::load_grid(require(cfg, files::kGrid, "ingest"), cfg.exclude_years);
}

std::vector<double> stage_covariate(const PipelineConfig& cfg, const io::Grid& grid) {
  return io::load_covariate(require(cfg, files::kCovariate, "ingest")).on_years(grid.years);
}

std::vector<fit::PixelFit> stage_fits(const PipelineConfig& cfg, const io::Grid& grid) {
  require(cfg, files::kGevFits, "fit");
  require(cfg, files::kFits, "fit");
  auto fits = read_fits(cfg.out_dir);
  if (fits.size() != grid.size()) {
    throw PipelineError("fits.csv has " + std::to_string(fits.size()) + " pixels but the grid has " +
                        std::to_string(grid.size()) + ": rerun the `fit` stage");
  }
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (fits[i].pixel_id != grid.pixels[i].pixel_id) {
      throw PipelineError("fits.csv pixel order differs from the grid: rerun the `fit` stage");
    }
  }
  return fits;
}

StageReport report(const PipelineConfig& cfg, std::string stage, std::initializer_list<const char*> outputs) {
  StageReport r;
  r.stage = std::move(stage);
  for (const char* o : outputs) r.outputs.push_back((cfg.out_dir / o).string());
  return r;
}

Variant variant_for(const PipelineConfig& cfg, const fit::PixelFit& f, io::Region region) {
  if (cfg.variant == "aic") return model::select_by_aic(f, true);
  if (cfg.variant == "aic-no-stationary") return model::select_by_aic(f, false);
  if (cfg.variant == "region") {
    return region == io::Region::Center || region == io::Region::East ? Variant::ScaleOnly : Variant::RateOnly;
  }
  return *parse_variant(cfg.variant);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw PipelineError("config: expected a JSON object");
  PipelineConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "rain_csv") c.rain_csv = resolve(v.get<std::string>(), base_dir);
      else if (key == "covariate_csv") c.covariate_csv = resolve(v.get<std::string>(), base_dir);
      else if (key == "out_dir") c.out_dir = resolve(v.get<std::string>(), base_dir);
      else if (key == "threshold_p") c.threshold_p = v.get<double>();
      else if (key == "lowess_span") c.lowess_span = v.get<double>();
      else if (key == "lowess_iterations") c.lowess_iterations = v.get<int>();
      else if (key == "acf_max_lag") c.acf_max_lag = v.get<int>();
      else if (key == "delta_x") c.delta_x = v.get<std::vector<double>>();
      else if (key == "q") c.q = v.get<double>();
      else if (key == "x_low") c.x_low = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
      else if (key == "variant") c.variant = v.get<std::string>();
      else if (key == "variogram_method") c.variogram_method = method_from(v.get<std::string>(), "variogram_method");
      else if (key == "copula_variogram_method") c.copula_method = method_from(v.get<std::string>(), "copula_variogram_method");
      else if (key == "variogram_bins") c.variogram_bins = v.get<int>();
      else if (key == "grid_spacing_km") c.grid_spacing_km = v.get<double>();
      else if (key == "grid_radius_km") c.grid_radius_km = v.get<double>();
      else if (key == "bootstrap_replicates") c.bootstrap_replicates = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "threads") c.threads = v.get<unsigned>();
      else if (key == "exclude_years") c.exclude_years = v.get<std::vector<int>>();
      else if (key == "run_length") c.run_length = v.get<int>();
      else if (key == "daily_pixels") c.daily_pixels = v.get<int>();
      else if (key == "daily_years") c.daily_years = v.get<int>();
      else if (key == "synth_pixels") c.synth_pixels = v.get<int>();
      else if (key == "synth_years") c.synth_years = v.get<int>();
      else if (key == "synth_first_year") c.synth_first_year = v.get<int>();
      else if (key == "synth_range_km") c.synth_range_km = v.get<double>();
      else if (key == "synth_threshold_spread") c.synth_threshold_spread = v.get<double>();
      else if (key == "synth_beta1") c.synth_beta1 = v.get<double>();
      else if (key == "synth_alpha1") c.synth_alpha1 = v.get<double>();
      else if (key == "synth_boundary_fraction") c.synth_boundary_fraction = v.get<double>();
      else throw PipelineError("config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw PipelineError("config: bad value for '" + key + "': " + e.what());
    }
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PipelineError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw PipelineError("config " + path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
  json j;
  j["rain_csv"] = rain_csv.string();
  j["covariate_csv"] = covariate_csv.string();
  j["out_dir"] = out_dir.string();
  j["threshold_p"] = threshold_p;
  j["lowess_span"] = lowess_span;
  j["lowess_iterations"] = lowess_iterations;
  j["acf_max_lag"] = acf_max_lag;
  j["delta_x"] = delta_x;
  j["q"] = q;
  j["x_low"] = x_low ? json(*x_low) : json(nullptr);
  j["variant"] = variant;
  j["variogram_method"] = std::string(spatial::to_string(variogram_method));
  j["copula_variogram_method"] = std::string(spatial::to_string(copula_method));
  j["variogram_bins"] = variogram_bins;
  j["grid_spacing_km"] = grid_spacing_km;
  j["grid_radius_km"] = grid_radius_km;
  j["bootstrap_replicates"] = bootstrap_replicates;
  j["seed"] = seed;
  j["threads"] = threads;
  j["exclude_years"] = exclude_years;
  j["run_length"] = run_length;
  j["daily_pixels"] = daily_pixels;
  j["daily_years"] = daily_years;
  j["synth_pixels"] = synth_pixels;
  j["synth_years"] = synth_years;
  j["synth_first_year"] = synth_first_year;
  j["synth_range_km"] = synth_range_km;
  j["synth_threshold_spread"] = synth_threshold_spread;
  j["synth_beta1"] = synth_beta1;
  j["synth_alpha1"] = synth_alpha1;
  j["synth_boundary_fraction"] = synth_boundary_fraction;
  return j;
}

void PipelineConfig::validate() const {
  if (!(threshold_p > 0.0 && threshold_p < 1.0)) throw PipelineError("threshold_p must lie in (0, 1)");
  if (!(q > 0.0 && q < 1.0)) throw PipelineError("q must lie in (0, 1)");
  if (!(lowess_span > 0.0 && lowess_span <= 1.0)) throw PipelineError("lowess_span must lie in (0, 1]");
  if (lowess_iterations < 0) throw PipelineError("lowess_iterations must be >= 0");
  if (acf_max_lag < 1) throw PipelineError("acf_max_lag must be >= 1");
  if (delta_x.empty()) throw PipelineError("delta_x must list at least one covariate increase");
  for (double d : delta_x) {
    if (!std::isfinite(d)) throw PipelineError("delta_x values must be finite");
  }
  if (variant != "aic" && variant != "aic-no-stationary" && variant != "region" && !parse_variant(variant)) {
    throw PipelineError("variant must be aic, aic-no-stationary, region, Stationary, RateOnly, ScaleOnly or Full");
  }
  if (variogram_bins < 4) throw PipelineError("variogram_bins must be >= 4");
  if (!(grid_spacing_km > 0.0) || !(grid_radius_km >= 0.0)) throw PipelineError("grid spacing must be > 0 and radius >= 0");
  if (bootstrap_replicates < 40) throw PipelineError("bootstrap_replicates must be >= 40");
  if (threads < 1) throw PipelineError("threads must be >= 1");
  if (run_length < 1) throw PipelineError("run_length must be >= 1");
  if (daily_pixels < 2 || daily_years < 10) throw PipelineError("daily_pixels must be >= 2 and daily_years >= 10");
  if (synth_pixels < 4 || synth_years < 10) throw PipelineError("synth_pixels must be >= 4 and synth_years >= 10");
  if (synth_boundary_fraction < 0.0 || synth_boundary_fraction > 1.0) {
    throw PipelineError("synth_boundary_fraction must lie in [0, 1]");
  }
}

// ---------------------------------------------------------------------------
// Fit artifacts

void write_fits(const fs::path& dir, const std::vector<fit::PixelFit>& fits) {
  {
    csv::Writer w(dir / files::kGevFits,
                  {"pixel_id", "mu", "sigma", "gamma", "loglik", "converged", "threshold", "skip_reason"});
    for (const auto& f : fits) {
      w.row(f.pixel_id, f.gev.params.mu, f.gev.params.sigma, f.gev.params.gamma, f.gev.loglik, f.gev.converged,
            f.threshold, cell_text(f.skip_reason));
    }
  }
  csv::Writer w(dir / files::kFits,
                {"pixel_id", "variant", "beta0", "beta1", "alpha0", "alpha1", "gamma", "c", "loglik", "converged",
                 "retried", "iterations", "se_beta0", "se_beta1", "se_alpha0", "se_alpha1", "se_gamma", "t_beta1",
                 "t_alpha1"});
  for (const auto& f : fits) {
    for (auto v : kAllVariants) {
      const auto& vf = f[v];
      const auto& t = vf.theta;
      w.row(f.pixel_id, to_string(v), t.beta0, t.beta1, t.alpha0, t.alpha1, t.gamma, t.c, vf.loglik, vf.converged,
            vf.retried, vf.iterations, vf.se[0], vf.se[1], vf.se[2], vf.se[3], vf.se[4], vf.t_beta1, vf.t_alpha1);
    }
  }
}

std::vector<fit::PixelFit> read_fits(const fs::path& dir) {
  const auto gev = csv::Table::read(dir / files::kGevFits);
  std::vector<fit::PixelFit> fits;
  std::map<long long, std::size_t> index;
  {
    const auto c_id = gev.column("pixel_id"), c_mu = gev.column("mu"), c_sigma = gev.column("sigma"),
               c_gamma = gev.column("gamma"), c_ll = gev.column("loglik"), c_conv = gev.column("converged"),
               c_thr = gev.column("threshold"), c_skip = gev.column("skip_reason");
    for (std::size_t r = 0; r < gev.rows(); ++r) {
      fit::PixelFit f;
      f.pixel_id = gev.integer(r, c_id);
      f.gev.params = {gev.number(r, c_mu), gev.number(r, c_sigma), gev.number(r, c_gamma)};
      f.gev.loglik = gev.number(r, c_ll);
      f.gev.converged = gev.integer(r, c_conv) != 0;
      f.threshold = gev.number(r, c_thr);
      f.skip_reason = std::string(gev.cell(r, c_skip));
      for (auto v : kAllVariants) f[v].theta.variant = v;
      if (!index.emplace(f.pixel_id, fits.size()).second) {
        throw csv::ParseError(gev.file(), gev.line(r), "duplicate pixel_id");
      }
      fits.push_back(std::move(f));
    }
  }
  const auto t = csv::Table::read(dir / files::kFits);
  const auto col = [&](const char* name) { return t.column(name); };
  const std::size_t c_id = col("pixel_id"), c_var = col("variant"), c_b0 = col("beta0"), c_b1 = col("beta1"),
                    c_a0 = col("alpha0"), c_a1 = col("alpha1"), c_g = col("gamma"), c_c = col("c"),
                    c_ll = col("loglik"), c_conv = col("converged"), c_retry = col("retried"),
                    c_it = col("iterations"), c_tb = col("t_beta1"), c_ta = col("t_alpha1");
  const std::array<std::size_t, 5> c_se = {col("se_beta0"), col("se_beta1"), col("se_alpha0"), col("se_alpha1"),
                                           col("se_gamma")};
  for (std::size_t r = 0; r < t.rows(); ++r) {
    const auto it = index.find(t.integer(r, c_id));
    if (it == index.end()) throw csv::ParseError(t.file(), t.line(r), "pixel_id not in gev_fits.csv");
    const auto v = parse_variant(t.cell(r, c_var));
    if (!v) throw csv::ParseError(t.file(), t.line(r), "unknown variant '" + std::string(t.cell(r, c_var)) + "'");
    auto& vf = fits[it->second][*v];
    vf.theta = {t.number(r, c_b0), t.number(r, c_b1), t.number(r, c_a0), t.number(r, c_a1),
                t.number(r, c_g),  t.number(r, c_c),  *v};
    vf.loglik = t.number(r, c_ll);
    vf.converged = t.integer(r, c_conv) != 0;
    vf.retried = t.integer(r, c_retry) != 0;
    vf.iterations = static_cast<int>(t.integer(r, c_it));
    for (std::size_t k = 0; k < 5; ++k) vf.se[k] = t.number(r, c_se[k]);
    vf.t_beta1 = t.number(r, c_tb);
    vf.t_alpha1 = t.number(r, c_ta);
  }
  return fits;
}

// ---------------------------------------------------------------------------
// Stages

StageReport run_ingest(const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.rain_csv.empty() || cfg.covariate_csv.empty()) {
    throw PipelineError("ingest needs rain_csv and covariate_csv in the config (run `synth` to create example inputs)");
  }
  for (const auto& p : {cfg.rain_csv, cfg.covariate_csv}) {
    if (!fs::exists(p)) throw PipelineError("input file not found: " + p.string());
  }
  fs::create_directories(cfg.out_dir);
  const io::Grid grid = io::load_grid(cfg.rain_csv, cfg.exclude_years);
  io::CovariateSeries cov = io::load_covariate(cfg.covariate_csv);
  std::vector<double> years(cov.years.begin(), cov.years.end());
  cov.smoothed = eda::lowess(years, cov.raw, cfg.lowess_span, cfg.lowess_iterations);
  cov.on_years(grid.years);  // every grid year needs a covariate value
  io::write_grid(cfg.out_dir / files::kGrid, grid);
  io::write_covariate(cfg.out_dir / files::kCovariate, cov);
  log_line("ingest", std::to_string(grid.size()) + " pixels x " + std::to_string(grid.years.size()) + " years");
  return report(cfg, "ingest", {files::kGrid, files::kCovariate});
}

StageReport run_eda(const PipelineConfig& cfg) {
  cfg.validate();
  const io::Grid grid = stage_grid(cfg);
  const std::size_t T = grid.years.size();
  const auto max_lag = std::min<std::size_t>(static_cast<std::size_t>(cfg.acf_max_lag), T - 1);
  StageReport rep = report(cfg, "eda", {files::kEdaAcf, files::kEdaFbplot, files::kEdaOutliers});
  {
    csv::Writer w(cfg.out_dir / files::kEdaAcf, {"pixel_id", "lag", "acf", "band"});
    std::size_t outside = 0, total = 0;
    for (const auto& px : grid.pixels) {
      eda::Acf acf;
      try {
        acf = eda::sample_acf(px.values, max_lag);
      } catch (const std::invalid_argument& e) {
        log_line("eda", "pixel " + std::to_string(px.pixel_id) + ": " + e.what());
        continue;
      }
      for (std::size_t k = 0; k <= max_lag; ++k) {
        w.row(px.pixel_id, k, acf.values[k], acf.band);
        if (k > 0) {
          ++total;
          outside += std::abs(acf.values[k]) > acf.band ? 1 : 0;
        }
      }
    }
    if (total > 0) {
      log_line("eda", "ACF outside the 95% band at " + std::to_string(outside) + " of " + std::to_string(total) +
                          " pixel-lags");
    }
  }
  std::vector<std::vector<double>> curves;
  std::vector<long long> ids;
  for (const auto& px : grid.pixels) {
    curves.push_back(px.values);
    ids.push_back(px.pixel_id);
  }
  const auto fb = eda::functional_boxplot(curves, ids);
  {
    csv::Writer w(cfg.out_dir / files::kEdaFbplot,
                  {"year", "median", "band_lo", "band_hi", "fence_lo", "fence_hi"});
    for (std::size_t t = 0; t < T; ++t) {
      w.row(grid.years[t], fb.median[t], fb.band_lo[t], fb.band_hi[t], fb.fence_lo[t], fb.fence_hi[t]);
    }
  }
  csv::Writer w(cfg.out_dir / files::kEdaOutliers, {"pixel_id", "depth"});
  for (auto id : fb.outlier_ids) {
    const auto k = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), id) - ids.begin());
    w.row(id, fb.depth[k]);
  }
  log_line("eda", std::to_string(fb.outlier_ids.size()) + " functional-boxplot outliers, median pixel " +
                      std::to_string(fb.median_id));
  return rep;
}

StageReport run_fit(const PipelineConfig& cfg) {
  cfg.validate();
  const io::Grid grid = stage_grid(cfg);
  const auto x = stage_covariate(cfg, grid);
  const auto fits = fit::fit_grid(grid, x, {cfg.threshold_p}, {}, cfg.threads);
  write_fits(cfg.out_dir, fits);
  StageReport rep = report(cfg, "fit", {files::kGevFits, files::kFits});
  for (const auto& f : fits) {
    if (f.all_converged()) continue;
    ++rep.skipped_pixels;
    log_line("fit", "pixel " + std::to_string(f.pixel_id) + " skipped: " + f.skip_reason);
  }
  log_line("fit", std::to_string(fits.size()) + " pixels on " + std::to_string(grid.years.size()) + " years, " +
                      std::to_string(rep.skipped_pixels) + " skipped");
  return rep;
}

StageReport run_select(const PipelineConfig& cfg) {
  cfg.validate();
  const io::Grid grid = stage_grid(cfg);
  const auto fits = stage_fits(cfg, grid);
  StageReport rep =
      report(cfg, "select", {files::kLrt, files::kAic, files::kAicCounts, files::kQqCurves, files::kDiagnostics});

  const auto run = model::run_lrts(fits);
  {
    csv::Writer w(cfg.out_dir / files::kLrt, {"pixel_id", "test", "statistic", "df", "p_value"});
    for (const auto& r : run.results) w.row(r.pixel_id, model::to_string(r.test), r.statistic, r.df, r.p_value);
  }
  std::vector<io::Region> regions;
  for (const auto& px : grid.pixels) regions.push_back(px.region);
  const auto table = model::aic_region_tables(fits, regions);
  {
    csv::Writer w(cfg.out_dir / files::kAic, {"pixel_id", "region", "aic_Stationary", "aic_RateOnly",
                                              "aic_ScaleOnly", "aic_Full", "best", "best_without_stationary"});
    for (const auto& r : table.rows) {
      w.row(r.pixel_id, io::to_string(r.region), r.aic[0], r.aic[1], r.aic[2], r.aic[3],
            to_string(r.best_with_stationary), to_string(r.best_without_stationary));
    }
  }
  {
    csv::Writer w(cfg.out_dir / files::kAicCounts,
                  {"table", "region", "Stationary", "RateOnly", "ScaleOnly", "Full", "total"});
    for (int with = 1; with >= 0; --with) {
      const auto& counts = with ? table.with_stationary : table.without_stationary;
      for (std::size_t r = 0; r < io::kRegionCount; ++r) {
        const auto& c = counts[r];
        w.row(with ? "with_stationary" : "without_stationary", io::to_string(static_cast<io::Region>(r)), c[0],
              c[1], c[2], c[3], c[0] + c[1] + c[2] + c[3]);
      }
    }
  }
  {
    csv::Writer w(cfg.out_dir / files::kQqCurves, {"test", "rank_frac", "p_sorted"});
    for (auto t : model::kAllTests) {
      const auto p = model::pvalues(run, t);
      if (p.empty()) continue;
      for (const auto& pt : model::pvalue_qq_curve(p)) w.row(model::to_string(t), pt.rank_frac, pt.p);
    }
  }
  csv::Writer w(cfg.out_dir / files::kDiagnostics, {"pixel_id", "reason"});
  for (const auto& e : run.excluded) w.row(e.pixel_id, cell_text(e.reason));
  rep.skipped_pixels = run.excluded.size();
  log_line("select", std::to_string(run.results.size() / model::kAllTests.size()) + " pixels tested, " +
                         std::to_string(run.excluded.size()) + " excluded");
  return rep;
}

StageReport run_scenarios(const PipelineConfig& cfg) {
  cfg.validate();
  const io::Grid grid = stage_grid(cfg);
  const auto x = stage_covariate(cfg, grid);
  const auto fits = stage_fits(cfg, grid);
  const double x_low = cfg.x_low.value_or(x.back());
  std::vector<Variant> variants;
  for (std::size_t i = 0; i < fits.size(); ++i) variants.push_back(variant_for(cfg, fits[i], grid.pixels[i].region));
  const auto rows = climate::run_scenarios(fits, variants, cfg.delta_x, cfg.q, x_low);
  csv::Writer w(cfg.out_dir / files::kScenarios,
                {"pixel_id", "variant", "delta_x", "q", "delta_lambda", "delta_sigma", "r_q_low", "prob_high"});
  for (const auto& r : rows) {
    w.row(r.pixel_id, to_string(r.variant), r.delta_x, r.q, r.delta_lambda, r.delta_sigma, r.r_q_low, r.prob_high);
  }
  log_line("scenarios", std::to_string(rows.size()) + " rows, x_low = " + csv::format(x_low) + ", variant " +
                            cfg.variant);
  return report(cfg, "scenarios", {files::kScenarios});
}

StageReport run_krige(const PipelineConfig& cfg) {
  cfg.validate();
  const io::Grid grid = stage_grid(cfg);
  const auto fits = stage_fits(cfg, grid);
  std::vector<double> lat, lon, alpha1, beta1;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (!fits[i].all_converged()) continue;
    lat.push_back(grid.pixels[i].lat);
    lon.push_back(grid.pixels[i].lon);
    alpha1.push_back(fits[i][Variant::Full].theta.alpha1);
    beta1.push_back(fits[i][Variant::Full].theta.beta1);
  }
  if (lat.size() < 4) throw PipelineError("krige needs at least 4 converged pixels");
  const auto proj = spatial::Projection::fit(lat, lon);
  std::vector<spatial::Point> points;
  for (std::size_t i = 0; i < lat.size(); ++i) points.push_back(proj.to_km(lat[i], lon[i]));
  const auto targets = spatial::fine_grid(points, cfg.grid_spacing_km, cfg.grid_radius_km);

  csv::Writer vg_out(cfg.out_dir / files::kVariogram,
                     {"param", "lag", "mean_distance", "semivariance", "count"});
  csv::Writer fit_out(cfg.out_dir / files::kMaternFit,
                      {"param", "method", "sigma2", "nu", "rho", "converged", "objective", "used_for_map"});
  struct Field {
    const char* name;
    const std::vector<double>* values;
    const char* file;
  };
  for (const Field& f : {Field{"alpha1", &alpha1, files::kKrigeAlpha1}, Field{"beta1", &beta1, files::kKrigeBeta1}}) {
    const auto vg = spatial::empirical_variogram(points, *f.values, cfg.variogram_bins);
    for (std::size_t b = 0; b < vg.lag.size(); ++b) {
      vg_out.row(f.name, vg.lag[b], vg.mean_distance[b], vg.semivariance[b], vg.count[b]);
    }
    std::optional<spatial::MaternParams> chosen;
    for (auto m : {spatial::VariogramMethod::LS, spatial::VariogramMethod::WLS, spatial::VariogramMethod::MLE}) {
      try {
        const auto mf = spatial::fit_variogram(vg, m, points, *f.values);
        const bool used = m == cfg.variogram_method;
        if (used) chosen = mf.params;
        fit_out.row(f.name, spatial::to_string(m), mf.params.sigma2, mf.params.nu, mf.params.rho, mf.converged,
                    mf.objective, used);
        if (!mf.converged) log_line("krige", std::string(f.name) + " " + std::string(spatial::to_string(m)) + " fit flagged non-convergent");
      } catch (const std::exception& e) {
        log_line("krige", std::string(f.name) + " " + std::string(spatial::to_string(m)) + " fit failed: " + e.what());
        fit_out.row(f.name, spatial::to_string(m), NAN, NAN, NAN, false, NAN, false);
      }
    }
    if (!chosen) throw PipelineError(std::string("krige: the ") + std::string(spatial::to_string(cfg.variogram_method)) + " variogram fit for " + f.name + " failed");
    const auto pred = spatial::krige_centered(points, *f.values, *chosen, targets);
    csv::Writer w(cfg.out_dir / f.file, {"lat", "lon", "value"});
    for (std::size_t k = 0; k < targets.size(); ++k) {
      const auto [la, lo] = proj.to_degrees(targets[k]);
      w.row(la, lo, pred[k]);
    }
  }
  log_line("krige", std::to_string(points.size()) + " pixels kriged onto " + std::to_string(targets.size()) +
                        " grid cells");
  return report(cfg, "krige", {files::kVariogram, files::kMaternFit, files::kKrigeAlpha1, files::kKrigeBeta1});
}

StageReport run_simulate_bands(const PipelineConfig& cfg) {
  cfg.validate();
  const io::Grid grid = stage_grid(cfg);
  const auto x = stage_covariate(cfg, grid);
  const auto fits = stage_fits(cfg, grid);
  copula::NullBandOptions opt;
  opt.replicates = cfg.bootstrap_replicates;
  opt.seed = CounterRng::stream(cfg.seed, "simulate-bands")();
  opt.threads = cfg.threads;
  opt.method = cfg.copula_method;
  opt.threshold = {cfg.threshold_p};
  const auto rep = copula::null_bands(grid, x, fits, opt);
  {
    csv::Writer w(cfg.out_dir / files::kQqBands, {"test", "rank_frac", "lo", "hi", "observed"});
    for (const auto& b : rep.bands) {
      for (std::size_t i = 0; i < b.band.size(); ++i) {
        const double obs = i < b.observed.size() ? b.observed[i] : NAN;
        w.row(model::to_string(b.test), b.band[i].rank_frac, b.band[i].lo, b.band[i].hi, obs);
      }
      log_line("simulate-bands", std::string(model::to_string(b.test)) + ": diagonal outside the band at " +
                                     std::to_string(copula::diagonal_misses(b.band)) + " of " +
                                     std::to_string(b.band.size()) + " ranks");
    }
  }
  csv::Writer w(cfg.out_dir / files::kCopulaFields,
                {"year", "mean", "sd", "in_sanity_band", "sigma2", "nu", "rho", "converged"});
  for (const auto& f : rep.stationary_fields) {
    w.row(f.year, f.mean, f.sd, f.in_sanity_band(), f.model.params.sigma2, f.model.params.nu, f.model.params.rho,
          f.model.converged);
  }
  log_line("simulate-bands", std::to_string(rep.pixels_used) + " pixels, " +
                                 std::to_string(cfg.bootstrap_replicates) + " replicates per null; " +
                                 std::to_string(rep.years_outside_sanity) + " year fields outside the mean/sd sanity band, " +
                                 std::to_string(rep.nonconverged_year_fits) + " year fits flagged");
  StageReport r = report(cfg, "simulate-bands", {files::kQqBands, files::kCopulaFields});
  return r;
}

StageReport run_decluster_check(const PipelineConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  io::DailySpec spec;
  spec.pixels = cfg.daily_pixels;
  spec.years = cfg.daily_years;
  const auto daily = io::synth_daily(spec, CounterRng::stream(cfg.seed, "decluster-check")());
  struct Row {
    double threshold = NAN, qp = NAN;
    std::size_t clusters = 0;
    std::string reason;
  };
  std::vector<Row> rows(daily.size());
  parallel_for(daily.size(), cfg.threads, [&](std::size_t j) {
    const auto am = io::annual_maxima(daily[j].values, spec.days_per_year);
    const auto gev = fit::fit_gev_stationary(am);
    if (!gev.converged) {
      rows[j].reason = "GEV fit did not converge";
      return;
    }
    rows[j].threshold = fit::threshold_from_gev(gev.params, {cfg.threshold_p});
    rows[j].qp = copula::sample_quantile_check(daily[j].values, rows[j].threshold, cfg.threshold_p, cfg.run_length);
    rows[j].clusters = copula::decluster(daily[j].values, rows[j].threshold, cfg.run_length).size();
  });
  csv::Writer w(cfg.out_dir / files::kDeclusterCheck,
                {"pixel_id", "threshold_c", "sample_Qp", "true_threshold", "clusters"});
  StageReport rep = report(cfg, "decluster-check", {files::kDeclusterCheck});
  std::vector<double> cs, qs;
  for (std::size_t j = 0; j < daily.size(); ++j) {
    if (!rows[j].reason.empty()) {
      ++rep.skipped_pixels;
      log_line("decluster-check", "pixel " + std::to_string(daily[j].pixel_id) + " skipped: " + rows[j].reason);
      continue;
    }
    w.row(daily[j].pixel_id, rows[j].threshold, rows[j].qp, daily[j].true_threshold, rows[j].clusters);
    cs.push_back(rows[j].threshold);
    qs.push_back(rows[j].qp);
  }
  if (cs.size() >= 2) {
    const double mc = std::accumulate(cs.begin(), cs.end(), 0.0) / static_cast<double>(cs.size());
    const double mq = std::accumulate(qs.begin(), qs.end(), 0.0) / static_cast<double>(qs.size());
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < cs.size(); ++k) {
      sxy += (cs[k] - mc) * (qs[k] - mq);
      sxx += (cs[k] - mc) * (cs[k] - mc);
      syy += (qs[k] - mq) * (qs[k] - mq);
    }
    log_line("decluster-check", "correlation of threshold and declustered quantile: " +
                                    csv::format(sxy / std::sqrt(sxx * syy)));
  }
  return rep;
}

StageReport run_synth(const PipelineConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  io::SynthSpec spec;
  spec.pixels = cfg.synth_pixels;
  spec.years = cfg.synth_years;
  spec.first_year = cfg.synth_first_year;
  spec.spatial_range_km = cfg.synth_range_km;
  spec.threshold_spread = cfg.synth_threshold_spread;
  spec.boundary_fraction = cfg.synth_boundary_fraction;
  spec.base.beta1 = cfg.synth_beta1;
  spec.base.alpha1 = cfg.synth_alpha1;
  const bool rate = cfg.synth_beta1 != 0.0, scale = cfg.synth_alpha1 != 0.0;
  spec.base.variant = rate && scale ? Variant::Full
                      : rate        ? Variant::RateOnly
                      : scale       ? Variant::ScaleOnly
                                    : Variant::Stationary;
  const auto result = io::synth_grid(spec, CounterRng::stream(cfg.seed, "synth")());
  io::write_rain_records(cfg.out_dir / files::kSynthRain, result.records);
  io::CovariateSeries raw_only = result.covariate;
  raw_only.smoothed.clear();
  io::write_covariate(cfg.out_dir / files::kSynthCovariate, raw_only);
  io::write_truth(cfg.out_dir / files::kSynthTruth, result.truth);
  log_line("synth", std::to_string(spec.pixels) + " pixels x " + std::to_string(spec.years) + " years, " +
                        std::to_string(result.records.size()) + " records");
  return report(cfg, "synth", {files::kSynthRain, files::kSynthCovariate, files::kSynthTruth});
}

std::vector<StageReport> run_all(const PipelineConfig& cfg) {
  std::vector<StageReport> out;
  out.push_back(run_ingest(cfg));
  out.push_back(run_eda(cfg));
  out.push_back(run_fit(cfg));
  out.push_back(run_select(cfg));
  out.push_back(run_scenarios(cfg));
  out.push_back(run_krige(cfg));
  out.push_back(run_simulate_bands(cfg));
  return out;
}

}  // namespace pgev::pipeline
