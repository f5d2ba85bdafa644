#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "pgev/copula_sim.hpp"
#include "pgev/data_io.hpp"
#include "pgev/evd.hpp"
#include "pgev/rng.hpp"

using namespace pgev;
using namespace pgev::copula;

namespace {

std::vector<spatial::Point> grid_points(const io::Grid& g) {
  std::vector<double> lat, lon;
  for (const auto& p : g.pixels) {
    lat.push_back(p.lat);
    lon.push_back(p.lon);
  }
  const auto proj = spatial::Projection::fit(lat, lon);
  std::vector<spatial::Point> pts;
  for (std::size_t i = 0; i < lat.size(); ++i) pts.push_back(proj.to_km(lat[i], lon[i]));
  return pts;
}

template <class Cdf>
double ks_distance(std::vector<double> v, Cdf cdf) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double f = cdf(v[i]);
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  return d;
}

std::vector<CopulaField> unit_fields(std::size_t years, const spatial::MaternParams& m) {
  std::vector<CopulaField> f(years);
  for (std::size_t t = 0; t < years; ++t) {
    f[t].year = 2000 + static_cast<int>(t);
    f[t].model.params = m;
    f[t].model.converged = true;
  }
  return f;
}

io::SynthResult stationary_grid(int pixels, int years, std::uint64_t seed) {
  io::SynthSpec spec;
  spec.pixels = pixels;
  spec.years = years;
  spec.threshold_spread = 0.3;
  return io::synth_grid(spec, seed);
}

std::vector<PgevThetaCov> truth_thetas(const io::SynthResult& s) {
  std::vector<PgevThetaCov> th;
  for (const auto& r : s.truth) th.push_back(r.theta);
  return th;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_SUITE("copula_sim") {
  TEST_CASE("normal examples") {
    CHECK(norm_quantile(0.5) == 0.0);
    CHECK(std::abs(norm_cdf(1.959964) - 0.9750) <= 1e-6);
    CHECK_THROWS_AS(norm_quantile(0.0), std::domain_error);
    CHECK_THROWS_AS(norm_quantile(1.0), std::domain_error);
  }

  TEST_CASE("normal functions agree with an independent implementation") {
    const boost::math::normal_distribution<double> nd;
    for (double x = -8.0; x <= 8.0; x += 0.01) {
      CHECK(std::abs(norm_cdf(x) - boost::math::cdf(nd, x)) <= 1e-9);
    }
    for (double q : {1e-15, 1e-10, 1e-6, 0.001, 0.02425, 0.1, 0.3, 0.5, 0.77, 0.97575, 0.999, 1.0 - 1e-9}) {
      CHECK(std::abs(norm_quantile(q) - boost::math::quantile(nd, q)) <= 1e-9);
    }
    for (double x = -6.0; x <= 6.0; x += 0.005) CHECK(std::abs(norm_quantile(norm_cdf(x)) - x) <= 1e-8);
  }

  TEST_CASE("PIT transform examples") {
    const PgevParams p{3.6525, 10.0, 0.1, 50.0};
    const GevParams g = pgev_to_gev(p);
    const double med = gev_quantile(0.5, g);
    CHECK(std::abs(to_gaussian(med, p)) <= 1e-10);
    CounterRng rng(4);
    for (int i = 0; i < 2000; ++i) {
      const PgevParams q{0.5 + 6.0 * rng.uniform(), 1.0 + 20.0 * rng.uniform(), 0.5 * rng.uniform() - 0.2,
                         20.0 + 80.0 * rng.uniform()};
      const double w = 8.0 * rng.uniform() - 4.0;
      const double z = from_gaussian(w, q);
      CHECK(std::abs(to_gaussian(z, q) - w) <= 1e-6 * std::max(1.0, std::abs(w)));
      CHECK(std::abs(from_gaussian(to_gaussian(z, q), q) - z) <= 1e-6 * std::abs(z));
    }
    // Far tails are clamped rather than infinite.
    CHECK(std::isfinite(to_gaussian(1e9, p)));
    CHECK(std::isfinite(from_gaussian(40.0, p)));
  }

  TEST_CASE("grid transforms roundtrip and pooled scores are normal") {
    const auto s = stationary_grid(200, 61, 31);
    const auto x = s.covariate.on_years(s.grid.years);
    const auto th = truth_thetas(s);
    const auto w = to_gaussian(s.grid, th, x);
    const auto back = from_gaussian(w, s.grid, th, x);
    std::vector<double> pooled;
    for (std::size_t j = 0; j < s.grid.size(); ++j) {
      for (std::size_t t = 0; t < s.grid.years.size(); ++t) {
        const double z = s.grid.pixels[j].values[t];
        CHECK(std::abs(back.pixels[j].values[t] - z) <= 1e-6 * std::abs(z));
        pooled.push_back(w[t][j]);
      }
    }
    REQUIRE(pooled.size() >= 10000);
    CHECK(ks_distance(pooled, norm_cdf) <= 0.02);
    CHECK_THROWS_AS(to_gaussian(s.grid, std::vector<PgevThetaCov>(3), x), std::invalid_argument);
  }

  TEST_CASE("simulation is deterministic and thread-independent") {
    const auto s = stationary_grid(30, 20, 8);
    const auto x = s.covariate.on_years(s.grid.years);
    const auto pts = grid_points(s.grid);
    const auto fields = unit_fields(20, {1.0, 0.5, 10.0});
    const auto a = simulate_null_grids(fields, pts, s.grid, truth_thetas(s), x, 3, 99, 1);
    const auto b = simulate_null_grids(fields, pts, s.grid, truth_thetas(s), x, 3, 99, 4);
    const auto c = simulate_null_grids(fields, pts, s.grid, truth_thetas(s), x, 3, 100, 1);
    REQUIRE(a.size() == 3);
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t j = 0; j < s.grid.size(); ++j) {
        CHECK(a[r].pixels[j].values == b[r].pixels[j].values);
      }
    }
    CHECK(a[0].pixels[0].values != c[0].pixels[0].values);
    CHECK(a[0].pixels[0].values != a[1].pixels[0].values);
  }

  TEST_CASE("simulated fields reproduce the model variogram") {
    const auto s = stationary_grid(150, 4, 12);
    const auto pts = grid_points(s.grid);
    const spatial::MaternParams m{1.0, 0.5, 12.0};
    const FieldSampler sampler(unit_fields(4, m), pts);
    const std::size_t bins = 8;
    std::vector<double> mean(bins, 0.0), dist;
    int fields = 0;
    for (std::uint64_t r = 0; r < 50; ++r) {
      for (const auto& w : sampler.draw(5, r)) {
        const auto v = spatial::empirical_variogram(pts, w, bins, 40.0);
        REQUIRE(v.lag.size() == bins);
        if (dist.empty()) dist = v.mean_distance;
        for (std::size_t b = 0; b < bins; ++b) mean[b] += v.semivariance[b];
        ++fields;
      }
    }
    for (std::size_t b = 2; b <= 5; ++b) {
      const double model = spatial::matern_semivariance(dist[b], m);
      CHECK(std::abs(mean[b] / fields / model - 1.0) <= 0.20);
    }
  }

  TEST_CASE("back-transformed marginals follow the null model") {
    // Each pixel pools its 61 yearly values over 50 replicates.
    const auto s = stationary_grid(60, 61, 21);
    const auto x = s.covariate.on_years(s.grid.years);
    const auto pts = grid_points(s.grid);
    const auto th = truth_thetas(s);
    const auto grids = simulate_null_grids(unit_fields(61, {1.0, 0.5, 10.0}), pts, s.grid, th, x, 50, 3, 4);
    int good = 0;
    for (std::size_t j = 0; j < s.grid.size(); ++j) {
      std::vector<double> v;
      for (const auto& g : grids) v.insert(v.end(), g.pixels[j].values.begin(), g.pixels[j].values.end());
      const auto gev = pgev_to_gev(th[j].at(0.0));
      good += ks_distance(v, [&](double z) { return gev_cdf(z, gev); }) <= 0.05 ? 1 : 0;
    }
    CHECK(good >= 0.95 * static_cast<double>(s.grid.size()));
  }

  TEST_CASE("year field fits") {
    const auto s = stationary_grid(80, 6, 2);
    const auto pts = grid_points(s.grid);
    const FieldSampler sampler(unit_fields(6, {1.0, 0.5, 10.0}), pts);
    const auto w = sampler.draw(1, 0);
    const auto fields = fit_year_fields(w, s.grid.years, pts, spatial::VariogramMethod::WLS, 2);
    REQUIRE(fields.size() == 6);
    for (std::size_t t = 0; t < 6; ++t) {
      CHECK(fields[t].year == s.grid.years[t]);
      CHECK(fields[t].w == w[t]);
      CHECK(fields[t].model.method == spatial::VariogramMethod::WLS);
      CHECK(fields[t].model.params.sigma2 > 0.0);
    }
    CopulaField f;
    f.mean = 0.1;
    f.sd = 1.2;
    CHECK(f.in_sanity_band());
    f.sd = 1.31;
    CHECK(!f.in_sanity_band());
    f.sd = 1.0;
    f.mean = -0.25;
    CHECK(!f.in_sanity_band());
  }

  TEST_CASE("qq band examples") {
    std::vector<std::vector<double>> same(40, {0.1, 0.4, 0.7, 0.9});
    const auto band = qq_band(same, 4);
    REQUIRE(band.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(band[i].lo == same[0][i]);
      CHECK(band[i].hi == same[0][i]);
      CHECK(band[i].rank_frac == doctest::Approx((i + 1) / 4.0));
    }
    CHECK_THROWS_AS(qq_band(std::vector<std::vector<double>>(39, {0.5}), 1), std::invalid_argument);
  }

  TEST_CASE("uniform null band contains the diagonal and is monotone") {
    CounterRng rng(77);
    std::vector<std::vector<double>> curves(100, std::vector<double>(1311));
    for (auto& c : curves) {
      for (auto& p : c) p = rng.uniform();
    }
    const auto band = qq_band(curves, 1311);
    CHECK(band_contains_diagonal(band));
    CHECK(diagonal_misses(band) == 0);
    for (std::size_t i = 1; i < band.size(); ++i) {
      CHECK(band[i].lo >= band[i - 1].lo);
      CHECK(band[i].hi >= band[i - 1].hi);
    }
    for (const auto& b : band) CHECK(b.lo <= b.hi);

    auto shifted = band;
    for (auto& b : shifted) b.lo = b.hi = std::min(1.0, b.rank_frac + 0.2);
    CHECK(!band_contains_diagonal(shifted));
  }

  TEST_CASE("declustering hand cases") {
    const std::vector<double> a = {0, 60, 0, 0, 0, 70};
    CHECK(decluster(a, 50.0, 3) == std::vector<double>{60, 70});
    const std::vector<double> b = {0, 60, 0, 0, 70, 0};
    CHECK(decluster(b, 50.0, 3) == std::vector<double>{70});
    CHECK(decluster(std::vector<double>{1, 2, 3, 50}, 50.0, 3).empty());
    CHECK(decluster(b, 50.0, 1) == std::vector<double>{60, 70});
    CHECK(declustered_series(a, 50.0, 3) == a);
    CHECK(declustered_series(b, 50.0, 3) == std::vector<double>{0, 70, 0});
    CHECK_THROWS_AS(decluster(a, 50.0, 0), std::invalid_argument);
  }

  TEST_CASE("declustering invariants") {
    CounterRng rng(12);
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> v(300);
      for (auto& d : v) d = rng.uniform() < 0.1 ? 50.0 + 40.0 * rng.uniform() : 50.0 * rng.uniform();
      const int r = 1 + static_cast<int>(rng.below(5));
      const auto m = decluster(v, 50.0, r);
      const auto exceed = std::count_if(v.begin(), v.end(), [](double d) { return d > 50.0; });
      CHECK(static_cast<long>(m.size()) <= exceed);
      for (double x : m) CHECK(x > 50.0);
      CHECK(declustered_series(v, 50.0, r).size() <= v.size());
    }
  }

  TEST_CASE("threshold and declustered quantile line up on synthetic daily data") {
    io::DailySpec spec;
    spec.pixels = 60;
    const auto daily = io::synth_daily(spec, 17);
    std::vector<double> cs, qs;
    for (const auto& px : daily) {
      const auto gev = fit::fit_gev_stationary(io::annual_maxima(px.values, spec.days_per_year));
      if (!gev.converged) continue;
      const double c = fit::threshold_from_gev(gev.params, {0.99});
      cs.push_back(c);
      qs.push_back(sample_quantile_check(px.values, c, 0.99, 3));
    }
    REQUIRE(cs.size() >= 55);
    CHECK(correlation(cs, qs) >= 0.95);
  }

  TEST_CASE("type 7 quantile") {
    CHECK(quantile_type7({1, 2, 3, 4}, 0.5) == 2.5);
    CHECK(quantile_type7({5}, 0.9) == 5.0);
    CHECK(quantile_type7({3, 1, 2}, 1.0) == 3.0);
    CHECK_THROWS(quantile_type7({}, 0.5));
  }

  TEST_CASE("null bands on a small grid") {
    const auto s = stationary_grid(25, 40, 66);
    const auto x = s.covariate.on_years(s.grid.years);
    const auto fits = fit::fit_grid(s.grid, x);
    NullBandOptions opt;
    opt.replicates = 40;
    opt.seed = 5;
    opt.threads = 4;
    const auto rep = null_bands(s.grid, x, fits, opt);
    REQUIRE(rep.bands.size() == 5);
    CHECK(rep.stationary_fields.size() == 40);
    CHECK(rep.pixels_used >= 20);
    for (const auto& b : rep.bands) {
      CHECK(b.observed.size() >= 20);
      CHECK(b.band.size() == b.observed.size());
      CHECK(std::is_sorted(b.observed.begin(), b.observed.end()));
    }
  }
}
