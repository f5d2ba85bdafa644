#include "pgev/evd.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pgev {
namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) {
    throw std::domain_error(std::string(what) + " must be finite");
  }
}

void check_gev(const GevParams& p) {
  check_finite(p.mu, "GEV location");
  check_finite(p.gamma, "GEV shape");
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) {
    throw std::domain_error("GEV scale must be finite and > 0");
  }
}

void check_pgev(const PgevParams& p) {
  check_finite(p.c, "PGEV threshold");
  check_finite(p.gamma, "PGEV shape");
  if (!(p.lambda_c > 0.0) || !std::isfinite(p.lambda_c)) {
    throw std::domain_error("PGEV rate must be finite and > 0");
  }
  if (!(p.sigma_c > 0.0) || !std::isfinite(p.sigma_c)) {
    throw std::domain_error("PGEV scale must be finite and > 0");
  }
}

// -log G(z) = t^(-1/gamma) with t = 1 + gamma (z - mu) / sigma, or the
// Gumbel limit exp(-r). Returns +inf left of a lower endpoint and 0 right of
// an upper endpoint.
double gev_neg_log_cdf(double z, const GevParams& p) {
  const double r = (z - p.mu) / p.sigma;
  if (std::abs(p.gamma) <= kShapeTolerance) return std::exp(-r);
  const double w = p.gamma * r;
  if (w <= -1.0) return p.gamma > 0.0 ? INFINITY : 0.0;
  return std::exp(-std::log1p(w) / p.gamma);
}

}  // namespace

double gev_cdf(double z, const GevParams& p) {
  check_finite(z, "z");
  check_gev(p);
  return std::exp(-gev_neg_log_cdf(z, p));
}

double gev_sf(double z, const GevParams& p) {
  check_finite(z, "z");
  check_gev(p);
  return -std::expm1(-gev_neg_log_cdf(z, p));
}

double gev_pdf(double z, const GevParams& p) {
  check_finite(z, "z");
  check_gev(p);
  const double r = (z - p.mu) / p.sigma;
  if (std::abs(p.gamma) <= kShapeTolerance) {
    return std::exp(-r - std::exp(-r)) / p.sigma;
  }
  const double w = p.gamma * r;
  if (w <= -1.0) return 0.0;
  const double log_t = std::log1p(w);
  const double t_pow = std::exp(-log_t / p.gamma);  // t^(-1/gamma)
  return std::exp(-log_t - log_t / p.gamma - t_pow) / p.sigma;
}

double gev_quantile(double q, const GevParams& p) {
  check_gev(p);
  if (!(q > 0.0 && q < 1.0)) throw std::domain_error("quantile level must lie in (0, 1)");
  const double log_y = std::log(-std::log(q));
  if (std::abs(p.gamma) <= kShapeTolerance) return p.mu - p.sigma * log_y;
  return p.mu + p.sigma * std::expm1(-p.gamma * log_y) / p.gamma;
}

double gpd_cdf(double z, const GpdParams& p) {
  check_finite(z, "exceedance");
  check_finite(p.gamma, "GPD shape");
  if (!(p.sigma_c > 0.0)) throw std::domain_error("GPD scale must be > 0");
  if (z < 0.0) throw std::domain_error("GPD exceedance must be >= 0");
  if (std::abs(p.gamma) <= kShapeTolerance) return -std::expm1(-z / p.sigma_c);
  const double w = p.gamma * z / p.sigma_c;
  if (w <= -1.0) return 1.0;
  return -std::expm1(-std::log1p(w) / p.gamma);
}

double gpd_pdf(double z, const GpdParams& p) {
  check_finite(z, "exceedance");
  check_finite(p.gamma, "GPD shape");
  if (!(p.sigma_c > 0.0)) throw std::domain_error("GPD scale must be > 0");
  if (z < 0.0) throw std::domain_error("GPD exceedance must be >= 0");
  if (std::abs(p.gamma) <= kShapeTolerance) return std::exp(-z / p.sigma_c) / p.sigma_c;
  const double w = p.gamma * z / p.sigma_c;
  if (w <= -1.0) return 0.0;
  return std::exp(-(1.0 / p.gamma + 1.0) * std::log1p(w)) / p.sigma_c;
}

GevParams pgev_to_gev(const PgevParams& p) {
  check_pgev(p);
  const double log_lambda = std::log(p.lambda_c);
  if (std::abs(p.gamma) <= kShapeTolerance) {
    return {p.c + p.sigma_c * log_lambda, p.sigma_c, p.gamma};
  }
  const double g_log = p.gamma * log_lambda;
  return {p.c + p.sigma_c * std::expm1(g_log) / p.gamma, p.sigma_c * std::exp(g_log), p.gamma};
}

double pgev_cdf(double z, const PgevParams& p) { return gev_cdf(z, pgev_to_gev(p)); }
double pgev_sf(double z, const PgevParams& p) { return gev_sf(z, pgev_to_gev(p)); }
double pgev_pdf(double z, const PgevParams& p) { return gev_pdf(z, pgev_to_gev(p)); }
double pgev_quantile(double q, const PgevParams& p) { return gev_quantile(q, pgev_to_gev(p)); }

std::vector<double> pgev_sample(std::size_t n, const PgevParams& p, CounterRng& rng) {
  const GevParams g = pgev_to_gev(p);
  std::vector<double> out(n);
  for (auto& v : out) v = gev_quantile(rng.uniform(), g);
  return out;
}

std::vector<double> pgev_sample(std::size_t n, const PgevParams& p, std::uint64_t seed) {
  CounterRng rng(seed);
  return pgev_sample(n, p, rng);
}

}  // namespace pgev
