#pragma once

// Closed-form distribution machinery for the generalized extreme value (GEV),
// generalized Pareto (GPD) and Poisson-GPD reparametrized GEV (PGEV) families.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pgev/rng.hpp"

namespace pgev {

/// Below this |shape| the Gumbel / exponential limit branches are used.
inline constexpr double kShapeTolerance = 1e-8;

/// Stationary GEV triple. sigma > 0.
struct GevParams {
  double mu = 0.0;
  double sigma = 1.0;
  double gamma = 0.0;
};

/// Generalized Pareto law of exceedances over the threshold c.
struct GpdParams {
  double sigma_c = 1.0;
  double gamma = 0.0;
  double c = 0.0;
};

/// GEV expressed through peaks-over-threshold quantities: yearly exceedance
/// rate lambda_c and GPD scale sigma_c above threshold c.
struct PgevParams {
  double lambda_c = 1.0;
  double sigma_c = 1.0;
  double gamma = 0.0;
  double c = 0.0;
};

// Each function throws std::domain_error on non-finite arguments or invalid
// parameters (non-positive scale or rate).

double gev_cdf(double z, const GevParams& p);
/// 1 - gev_cdf, computed without cancellation in the upper tail.
double gev_sf(double z, const GevParams& p);
double gev_pdf(double z, const GevParams& p);
/// Closed-form inverse of gev_cdf; q must lie in (0, 1).
double gev_quantile(double q, const GevParams& p);

/// z is the exceedance over the threshold, z >= 0.
double gpd_cdf(double z, const GpdParams& p);
double gpd_pdf(double z, const GpdParams& p);

GevParams pgev_to_gev(const PgevParams& p);

double pgev_cdf(double z, const PgevParams& p);
double pgev_sf(double z, const PgevParams& p);
double pgev_pdf(double z, const PgevParams& p);
double pgev_quantile(double q, const PgevParams& p);

/// Inverse-CDF draws from uniforms of `rng`.
std::vector<double> pgev_sample(std::size_t n, const PgevParams& p, CounterRng& rng);
std::vector<double> pgev_sample(std::size_t n, const PgevParams& p, std::uint64_t seed);

}  // namespace pgev
