#include "pgev/copula_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pgev/parallel.hpp"
#include "pgev/rng.hpp"

namespace pgev::copula {
namespace {

// GEV quantile at the point whose CDF is exp(-y).
double quantile_from_y(double y, const GevParams& g) {
  if (std::abs(g.gamma) <= kShapeTolerance) return g.mu - g.sigma * std::log(y);
  return g.mu + g.sigma * std::expm1(-g.gamma * std::log(y)) / g.gamma;
}

void check_shapes(const io::Grid& grid, const std::vector<PgevThetaCov>& thetas, std::span<const double> x) {
  if (thetas.size() != grid.size()) throw std::invalid_argument("copula: one fitted model per pixel required");
  if (x.size() != grid.years.size()) throw std::invalid_argument("copula: covariate length differs from the year axis");
}

}  // namespace

double to_gaussian(double z, const PgevParams& p) {
  const double u = pgev_cdf(z, p);
  if (u <= 0.5) return norm_quantile(std::max(u, kUniformClamp));
  return -norm_quantile(std::max(pgev_sf(z, p), kUniformClamp));
}

double from_gaussian(double w, const PgevParams& p) {
  const GevParams g = pgev_to_gev(p);
  if (w <= 0.0) {
    const double u = std::clamp(norm_cdf(w), kUniformClamp, 1.0 - kUniformClamp);
    return quantile_from_y(-std::log(u), g);
  }
  const double sf = std::clamp(norm_cdf(-w), kUniformClamp, 1.0 - kUniformClamp);
  return quantile_from_y(-std::log1p(-sf), g);
}

std::vector<std::vector<double>> to_gaussian(const io::Grid& grid, const std::vector<PgevThetaCov>& thetas,
                                             std::span<const double> x) {
  check_shapes(grid, thetas, x);
  std::vector<std::vector<double>> w(grid.years.size(), std::vector<double>(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto th = thetas[j].constrained();
    for (std::size_t t = 0; t < grid.years.size(); ++t) {
      w[t][j] = to_gaussian(grid.pixels[j].values[t], th.at(x[t]));
    }
  }
  return w;
}

io::Grid from_gaussian(const std::vector<std::vector<double>>& w, const io::Grid& shape,
                       const std::vector<PgevThetaCov>& thetas, std::span<const double> x) {
  check_shapes(shape, thetas, x);
  if (w.size() != shape.years.size()) throw std::invalid_argument("from_gaussian: one score row per year");
  io::Grid out = shape;
  for (std::size_t j = 0; j < out.size(); ++j) {
    const auto th = thetas[j].constrained();
    for (std::size_t t = 0; t < out.years.size(); ++t) {
      if (w[t].size() != out.size()) throw std::invalid_argument("from_gaussian: one score per pixel");
      out.pixels[j].values[t] = from_gaussian(w[t][j], th.at(x[t]));
    }
  }
  return out;
}

bool CopulaField::in_sanity_band() const { return std::abs(mean) <= 0.2 && sd >= 0.7 && sd <= 1.3; }

std::vector<CopulaField> fit_year_fields(const std::vector<std::vector<double>>& w, const std::vector<int>& years,
                                         std::span<const spatial::Point> points,
                                         spatial::VariogramMethod method, unsigned threads) {
  if (w.size() != years.size()) throw std::invalid_argument("fit_year_fields: one score row per year");
  std::vector<CopulaField> out(w.size());
  parallel_for(w.size(), threads, [&](std::size_t t) {
    CopulaField f;
    f.year = years[t];
    f.w = w[t];
    if (f.w.size() != points.size()) throw std::invalid_argument("fit_year_fields: one score per site");
    const double n = static_cast<double>(f.w.size());
    f.mean = std::accumulate(f.w.begin(), f.w.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : f.w) ss += (v - f.mean) * (v - f.mean);
    f.sd = std::sqrt(ss / (n - 1.0));
    const auto vg = spatial::empirical_variogram(points, f.w);
    f.model = spatial::fit_variogram(vg, method, points, f.w);
    out[t] = std::move(f);
  });
  return out;
}

FieldSampler::FieldSampler(const std::vector<CopulaField>& fields, std::span<const spatial::Point> points)
    : pixels_(points.size()) {
  if (fields.empty()) throw std::invalid_argument("FieldSampler: no year models");
  factors_.reserve(fields.size());
  for (const auto& f : fields) {
    factors_.push_back(spatial::cholesky_with_jitter(spatial::covariance_matrix(points, f.model.params)).lower);
  }
}

std::vector<std::vector<double>> FieldSampler::draw(std::uint64_t seed, std::uint64_t replicate) const {
  CounterRng rng = CounterRng::stream(seed, "copula-replicate", replicate);
  const std::size_t T = factors_.size();
  std::vector<std::vector<double>> w(T, std::vector<double>(pixels_));
  Eigen::VectorXd z(static_cast<Eigen::Index>(pixels_));
  for (std::size_t t = 0; t < T; ++t) {
    const auto& l = factors_[rng.below(T)];
    for (auto& v : z) v = rng.normal();
    const Eigen::VectorXd field = l.triangularView<Eigen::Lower>() * z;
    for (std::size_t j = 0; j < pixels_; ++j) w[t][j] = field[static_cast<Eigen::Index>(j)];
  }
  return w;
}

std::vector<io::Grid> simulate_null_grids(const std::vector<CopulaField>& fields,
                                          std::span<const spatial::Point> points, const io::Grid& shape,
                                          const std::vector<PgevThetaCov>& null_thetas,
                                          std::span<const double> x, std::size_t replicates,
                                          std::uint64_t seed, unsigned threads) {
  const FieldSampler sampler(fields, points);
  if (sampler.years() != shape.years.size()) {
    throw std::invalid_argument("simulate_null_grids: one year model per year");
  }
  std::vector<io::Grid> out(replicates);
  parallel_for(replicates, threads, [&](std::size_t b) {
    out[b] = from_gaussian(sampler.draw(seed, b), shape, null_thetas, x);
  });
  return out;
}

double quantile_type7(std::vector<double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("quantile: p must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::vector<BandPoint> qq_band(const std::vector<std::vector<double>>& curves, std::size_t n, double level) {
  if (curves.size() < 40) throw std::invalid_argument("qq_band: need at least 40 replicate curves");
  if (n == 0) throw std::invalid_argument("qq_band: n must be positive");
  if (!(level > 0.0 && level < 1.0)) throw std::domain_error("qq_band: level must lie in (0, 1)");
  std::vector<std::vector<double>> sorted;
  sorted.reserve(curves.size());
  for (const auto& c : curves) {
    if (c.empty()) throw std::invalid_argument("qq_band: empty replicate curve");
    auto s = c;
    std::sort(s.begin(), s.end());
    sorted.push_back(std::move(s));
  }
  std::vector<BandPoint> band(n);
  std::vector<double> column(sorted.size());
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t b = 0; b < sorted.size(); ++b) {
      const std::size_t m = sorted[b].size();
      const std::size_t k = (i * m + n - 1) / n;  // ceil(i m / n), in 1..m
      column[b] = sorted[b][k - 1];
    }
    band[i - 1] = {static_cast<double>(i) / static_cast<double>(n), quantile_type7(column, 0.5 * (1.0 - level)),
                   quantile_type7(column, 0.5 * (1.0 + level))};
  }
  return band;
}

std::size_t diagonal_misses(const std::vector<BandPoint>& band) {
  const double n = static_cast<double>(band.size());
  std::size_t misses = 0;
  for (std::size_t i = 0; i < band.size(); ++i) {
    const double step_lo = static_cast<double>(i) / n;
    const double step_hi = static_cast<double>(i + 1) / n;
    if (band[i].lo > step_hi || band[i].hi < step_lo) ++misses;
  }
  return misses;
}

bool band_contains_diagonal(const std::vector<BandPoint>& band) { return diagonal_misses(band) == 0; }

NullBandReport null_bands(const io::Grid& grid, std::span<const double> x,
                          const std::vector<fit::PixelFit>& fits, const NullBandOptions& options) {
  if (fits.size() != grid.size()) throw std::invalid_argument("null_bands: one fit per pixel required");
  io::Grid used;
  used.years = grid.years;
  std::vector<const fit::PixelFit*> used_fits;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (fits[j].pixel_id != grid.pixels[j].pixel_id) throw std::invalid_argument("null_bands: fits out of pixel order");
    if (!fits[j].all_converged()) continue;
    used.pixels.push_back(grid.pixels[j]);
    used_fits.push_back(&fits[j]);
  }
  if (used.size() < 4) throw std::invalid_argument("null_bands: fewer than 4 usable pixels");

  std::vector<double> lat, lon;
  for (const auto& px : used.pixels) {
    lat.push_back(px.lat);
    lon.push_back(px.lon);
  }
  const auto proj = spatial::Projection::fit(lat, lon);
  std::vector<spatial::Point> points;
  for (const auto& px : used.pixels) points.push_back(proj.to_km(px.lat, px.lon));

  NullBandReport report;
  report.pixels_used = used.size();
  const auto observed = model::run_lrts(fits);

  struct NullCase {
    Variant null;
    std::vector<model::LrtTest> tests;
  };
  const std::vector<NullCase> cases = {
      {Variant::Stationary, {model::LrtTest::T1_lambda, model::LrtTest::T2_sigma, model::LrtTest::T3_both}},
      {Variant::RateOnly, {model::LrtTest::Ta_full_vs_lambda}},
      {Variant::ScaleOnly, {model::LrtTest::Tb_full_vs_sigma}},
  };

  fit::FitOptions fit_options;
  fit_options.standard_errors = false;
  for (const auto& nc : cases) {
    std::vector<PgevThetaCov> thetas;
    for (const auto* f : used_fits) thetas.push_back((*f)[nc.null].theta);
    const auto w = to_gaussian(used, thetas, x);
    auto fields = fit_year_fields(w, used.years, points, options.method, options.threads);
    for (const auto& f : fields) {
      report.years_outside_sanity += f.in_sanity_band() ? 0 : 1;
      report.nonconverged_year_fits += f.model.converged ? 0 : 1;
    }
    const FieldSampler sampler(fields, points);

    // Stream index separates the nulls so their replicates are independent.
    const std::uint64_t null_seed = CounterRng::stream(options.seed, "null-bands", static_cast<std::uint64_t>(nc.null))();
    std::vector<std::vector<std::vector<double>>> curves(nc.tests.size(),
                                                         std::vector<std::vector<double>>(options.replicates));
    std::vector<std::size_t> excluded(options.replicates, 0);
    parallel_for(options.replicates, options.threads, [&](std::size_t b) {
      const io::Grid sim = from_gaussian(sampler.draw(null_seed, b), used, thetas, x);
      const auto sim_fits = fit::fit_grid(sim, x, options.threshold, fit_options, 1);
      const auto run = model::run_lrts(sim_fits);
      excluded[b] = run.excluded.size();
      for (std::size_t k = 0; k < nc.tests.size(); ++k) {
        curves[k][b] = model::pvalues(run, nc.tests[k]);
        if (curves[k][b].empty()) throw std::runtime_error("null_bands: a replicate has no usable pixels");
      }
    });
    report.replicate_pixels_excluded += std::accumulate(excluded.begin(), excluded.end(), std::size_t{0});

    for (std::size_t k = 0; k < nc.tests.size(); ++k) {
      TestBand tb;
      tb.test = nc.tests[k];
      tb.observed = model::pvalues(observed, tb.test);
      std::sort(tb.observed.begin(), tb.observed.end());
      const std::size_t n = tb.observed.empty() ? used.size() : tb.observed.size();
      tb.band = qq_band(curves[k], n);
      report.bands.push_back(std::move(tb));
    }
    if (nc.null == Variant::Stationary) report.stationary_fields = std::move(fields);
  }
  std::sort(report.bands.begin(), report.bands.end(),
            [](const TestBand& a, const TestBand& b) { return a.test < b.test; });
  return report;
}

namespace {

// Walks the run rule, calling on_value for kept non-cluster values and
// on_cluster for each cluster maximum, in series order.
template <class Value, class Cluster>
void scan_clusters(std::span<const double> daily, double threshold, int r, Value on_value, Cluster on_cluster) {
  if (r < 1) throw std::invalid_argument("decluster: run length must be >= 1");
  bool active = false;
  double peak = 0.0;
  std::vector<double> pending;  // sub-threshold values since the last exceedance
  for (double v : daily) {
    if (v > threshold) {
      if (!active) {
        active = true;
        peak = v;
      } else {
        peak = std::max(peak, v);
      }
      pending.clear();
      continue;
    }
    if (!active) {
      on_value(v);
      continue;
    }
    pending.push_back(v);
    if (static_cast<int>(pending.size()) >= r) {
      on_cluster(peak);
      for (double p : pending) on_value(p);
      pending.clear();
      active = false;
    }
  }
  if (active) {
    on_cluster(peak);
    for (double p : pending) on_value(p);
  }
}

}  // namespace

std::vector<double> decluster(std::span<const double> daily, double threshold, int r) {
  std::vector<double> out;
  scan_clusters(daily, threshold, r, [](double) {}, [&](double m) { out.push_back(m); });
  return out;
}

std::vector<double> declustered_series(std::span<const double> daily, double threshold, int r) {
  std::vector<double> out;
  out.reserve(daily.size());
  scan_clusters(daily, threshold, r, [&](double v) { out.push_back(v); }, [&](double m) { out.push_back(m); });
  return out;
}

double sample_quantile_check(std::span<const double> daily, double threshold, double p, int r) {
  return quantile_type7(declustered_series(daily, threshold, r), p);
}

}  // namespace pgev::copula
