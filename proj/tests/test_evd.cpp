#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>

#include "pgev/evd.hpp"
#include "pgev/rng.hpp"

using namespace pgev;

namespace {

// Support bounds of a GEV, used to set integration limits.
std::pair<double, double> support(const GevParams& g) {
  double lo = -INFINITY, hi = INFINITY;
  if (g.gamma > 0) lo = g.mu - g.sigma / g.gamma;
  if (g.gamma < 0) hi = g.mu - g.sigma / g.gamma;
  return {lo, hi};
}

GevParams random_gev(CounterRng& rng) {
  return {rng.uniform() * 200.0 - 100.0, 0.1 + rng.uniform() * 60.0, rng.uniform() * 0.8 - 0.4};
}

// Poisson count of GPD exceedances: P(no exceedance of z in a year).
double pot_cdf(double z, const PgevParams& p) {
  if (p.gamma == 0.0) return std::exp(-p.lambda_c * std::exp(-(z - p.c) / p.sigma_c));
  const double s = 1.0 + p.gamma * (z - p.c) / p.sigma_c;
  if (s <= 0.0) return p.gamma > 0.0 ? 0.0 : 1.0;
  return std::exp(-p.lambda_c * std::pow(s, -1.0 / p.gamma));
}

}  // namespace

TEST_SUITE("evd_core") {
  TEST_CASE("gev_cdf examples") {
    CHECK(gev_cdf(5.0, {5.0, 3.0, 0.3}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(gev_cdf(5.0, {5.0, 2.0, 0.0}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(gev_cdf(2.0, {0.0, 1.0, 0.2}) == doctest::Approx(std::exp(-std::pow(1.4, -5.0))).epsilon(1e-14));
    CHECK(gev_cdf(2.0, {0.0, 1.0, 0.2}) == doctest::Approx(0.83033).epsilon(1e-5));
  }

  TEST_CASE("gev_cdf clamps outside the support and rejects bad input") {
    CHECK(gev_cdf(-3.0, {0.0, 1.0, 0.5}) == 0.0);
    CHECK(gev_cdf(10.0, {0.0, 1.0, -0.5}) == 1.0);
    CHECK_THROWS_AS(gev_cdf(NAN, {0.0, 1.0, 0.1}), std::domain_error);
    CHECK_THROWS_AS(gev_cdf(INFINITY, {0.0, 1.0, 0.1}), std::domain_error);
    CHECK_THROWS_AS(gev_cdf(0.0, {0.0, 0.0, 0.1}), std::domain_error);
    CHECK_THROWS_AS(gev_cdf(0.0, {0.0, -1.0, 0.1}), std::domain_error);
  }

  TEST_CASE("gev_pdf examples") {
    CHECK(gev_pdf(1.0, {1.0, 2.0, 0.0}) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-14));
    CHECK(gev_pdf(-3.0, {0.0, 1.0, 0.5}) == 0.0);
    const GevParams g{0.0, 1.0, 0.2};
    const double h = 1e-5;
    const double fd = (gev_cdf(2.0 + h, g) - gev_cdf(2.0 - h, g)) / (2 * h);
    CHECK(std::abs(fd - gev_pdf(2.0, g)) <= 1e-6 * gev_pdf(2.0, g));
  }

  TEST_CASE("gev_quantile examples") {
    // F(mu) = exp(-1) for every shape.
    const double q = std::exp(-1.0);
    CHECK(gev_quantile(q, {7.0, 3.0, 0.25}) == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(gev_quantile(q, {7.0, 3.0, 0.0}) == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(gev_quantile(0.95, {0.0, 1.0, 0.0}) == doctest::Approx(-std::log(-std::log(0.95))).epsilon(1e-14));
    CHECK(gev_quantile(0.95, {0.0, 1.0, 0.0}) == doctest::Approx(2.970195).epsilon(1e-6));
    CHECK_THROWS_AS(gev_quantile(0.0, {0.0, 1.0, 0.1}), std::domain_error);
    CHECK_THROWS_AS(gev_quantile(1.0, {0.0, 1.0, 0.1}), std::domain_error);
  }

  TEST_CASE("quantile and cdf are inverse") {
    CounterRng rng(11);
    for (int i = 0; i < 100; ++i) {
      const GevParams g = random_gev(rng);
      const double q = 0.001 + 0.998 * rng.uniform();
      CHECK(std::abs(gev_cdf(gev_quantile(q, g), g) - q) <= 1e-10);
    }
  }

  TEST_CASE("gpd examples") {
    CHECK(gpd_cdf(0.0, {10.0, 0.2, 50.0}) == 0.0);
    CHECK(gpd_cdf(4.0, {4.0, 0.0, 0.0}) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
    CHECK(gpd_cdf(10.0, {10.0, 0.2, 50.0}) == doctest::Approx(1.0 - std::pow(1.2, -5.0)).epsilon(1e-14));
    CHECK(gpd_cdf(10.0, {10.0, 0.2, 50.0}) == doctest::Approx(0.5981224).epsilon(1e-7));
    CHECK_THROWS_AS(gpd_cdf(-1.0, {10.0, 0.2, 50.0}), std::domain_error);
    // Density is the derivative of the CDF.
    const GpdParams g{10.0, 0.2, 0.0};
    const double h = 1e-5;
    CHECK((gpd_cdf(3.0 + h, g) - gpd_cdf(3.0 - h, g)) / (2 * h) == doctest::Approx(gpd_pdf(3.0, g)).epsilon(1e-8));
  }

  TEST_CASE("pgev_to_gev examples") {
    const auto a = pgev_to_gev({1.0, 10.0, 0.3, 50.0});
    CHECK(a.mu == doctest::Approx(50.0).epsilon(1e-14));
    CHECK(a.sigma == doctest::Approx(10.0).epsilon(1e-14));

    const auto b = pgev_to_gev({3.6525, 10.0, 0.1, 50.0});
    CHECK(b.mu == doctest::Approx(50.0 + 10.0 * (std::pow(3.6525, 0.1) - 1.0) / 0.1).epsilon(1e-13));
    // 30-digit reference values.
    CHECK(b.mu == doctest::Approx(63.8305993296452921).epsilon(1e-13));
    CHECK(b.sigma == doctest::Approx(11.3830599329645292).epsilon(1e-13));
    CHECK(b.gamma == 0.1);

    const auto c = pgev_to_gev({std::exp(1.0), 1.0, 0.0, 0.0});
    CHECK(c.mu == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(c.sigma == doctest::Approx(1.0).epsilon(1e-14));
  }

  TEST_CASE("pgev cdf examples") {
    const PgevParams p{3.6525, 10.0, 0.1, 50.0};
    CHECK(pgev_cdf(pgev_to_gev(p).mu, p) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(std::abs(pgev_cdf(63.8313, p) - 0.36788) <= 1e-4);
    for (double z : {41.0, 55.0, 80.0, 300.0}) {
      CHECK(pgev_cdf(z, {1.0, 10.0, 0.2, 50.0}) == gev_cdf(z, {50.0, 10.0, 0.2}));
    }
  }

  TEST_CASE("pgev functions equal the GEV ones after reparametrization") {
    CounterRng rng(5);
    for (int i = 0; i < 2000; ++i) {
      const PgevParams p{0.1 + 10.0 * rng.uniform(), 0.5 + 30.0 * rng.uniform(), rng.uniform() * 0.8 - 0.4,
                         200.0 * rng.uniform()};
      const GevParams g = pgev_to_gev(p);
      const double z = gev_quantile(0.001 + 0.998 * rng.uniform(), g) + (rng.uniform() - 0.5);
      CHECK(std::abs(pgev_cdf(z, p) - gev_cdf(z, g)) <= 1e-12);
      CHECK(std::abs(pgev_pdf(z, p) - gev_pdf(z, g)) <= 1e-12);
      CHECK(std::abs(pgev_cdf(z, p) - pot_cdf(z, p)) <= 1e-12);
    }
  }

  TEST_CASE("pgev sampling matches the CDF") {
    const PgevParams p{3.6525, 10.0, 0.1, 50.0};
    auto draws = pgev_sample(100000, p, std::uint64_t{2024});
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    const double n = static_cast<double>(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
      const double f = pgev_cdf(draws[i], p);
      ks = std::max({ks, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
    }
    CHECK(ks <= 0.01);
    CHECK(pgev_sample(10, p, std::uint64_t{3}) == pgev_sample(10, p, std::uint64_t{3}));
  }

  TEST_CASE("cdfs are nondecreasing") {
    CounterRng rng(8);
    for (int i = 0; i < 50; ++i) {
      const GevParams g = random_gev(rng);
      double prev = 0.0;
      for (double z = g.mu - 10 * g.sigma; z <= g.mu + 10 * g.sigma; z += 0.05 * g.sigma) {
        const double f = gev_cdf(z, g);
        CHECK(f >= prev);
        prev = f;
      }
    }
  }

  TEST_CASE("densities integrate to one") {
    using boost::math::quadrature::exp_sinh;
    using boost::math::quadrature::gauss_kronrod;
    for (const GevParams g : {GevParams{0, 1, 0.3}, GevParams{5, 2, -0.3}, GevParams{-3, 0.5, 0.0},
                              GevParams{100, 50, 0.2}, GevParams{0, 1, -0.05}}) {
      const auto [lo, hi] = support(g);
      const auto f = [&](double z) { return gev_pdf(z, g); };
      // Split at the mode region so each piece is smooth and well scaled.
      const double a = std::isfinite(lo) ? lo : g.mu - 40 * g.sigma;
      const double b = std::isfinite(hi) ? hi : g.mu + 5 * g.sigma;
      double total = gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-12);
      if (!std::isfinite(hi)) {
        exp_sinh<double> tail;
        total += tail.integrate([&](double t) { return f(b + t); }, 1e-12);
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
    }
    for (const GpdParams g : {GpdParams{10, 0.2, 0}, GpdParams{3, 0.0, 0}}) {
      boost::math::quadrature::exp_sinh<double> tail;
      CHECK(tail.integrate([&](double z) { return gpd_pdf(z, g); }, 1e-12) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }

  TEST_CASE("shape-branch continuity") {
    const GevParams base{10.0, 3.0, 0.0};
    for (double gamma : {1e-7, -1e-7}) {
      GevParams g = base;
      g.gamma = gamma;
      for (int i = 0; i < 20; ++i) {
        const double z = base.mu - 2 * base.sigma + i * 0.4 * base.sigma;
        const double q = 0.02 + i * 0.048;
        CHECK(std::abs(gev_cdf(z, g) - gev_cdf(z, base)) <= 1e-5);
        CHECK(std::abs(gev_pdf(z, g) - gev_pdf(z, base)) <= 1e-5);
        CHECK(std::abs(gev_quantile(q, g) - gev_quantile(q, base)) <= 1e-5);
      }
    }
  }
}
