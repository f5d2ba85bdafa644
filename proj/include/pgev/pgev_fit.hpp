#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pgev/data_io.hpp"
#include "pgev/evd.hpp"
#include "pgev/theta.hpp"

namespace pgev::fit {

/// Daily quantile level p defining the threshold; lambda_p = 365.25 (1 - p)
/// exceedance events per year.
struct ThresholdSpec {
  double p = 0.99;
  double lambda_p() const { return 365.25 * (1.0 - p); }
};

struct GevFit {
  GevParams params;
  double loglik = 0.0;
  bool converged = false;
  std::string message;
};

double gev_loglik(const GevParams& p, std::span<const double> z);

/// GEV maximum likelihood. Starts from Gumbel moment estimates with shape 0.1,
/// restarting from shape 1e-8. Throws std::invalid_argument for fewer than 10
/// values, non-finite values, or a constant series.
GevFit fit_gev_stationary(std::span<const double> z);

/// Threshold c whose implied exceedance rate under the GEV is lambda_p.
double threshold_from_gev(const GevParams& g, const ThresholdSpec& spec);

/// Gradient order: beta0, beta1, alpha0, alpha1, gamma.
struct LoglikGradient {
  double value = 0.0;
  std::array<double, 5> gradient{};
};

/// Covariate PGEV log-likelihood for fixed threshold theta.c. Returns -inf when
/// gamma (z_t - c) + sigma_c(x_t) <= 0 for some t. Throws std::domain_error on
/// non-finite inputs or mismatched lengths.
double pgev_loglik(const PgevThetaCov& theta, std::span<const double> z, std::span<const double> x);
LoglikGradient pgev_loglik_gradient(const PgevThetaCov& theta, std::span<const double> z,
                                    std::span<const double> x);

struct FitOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  bool standard_errors = true;
};

inline constexpr std::size_t kThetaSize = 5;

struct VariantFit {
  PgevThetaCov theta;
  double loglik = -INFINITY;
  bool converged = false;
  bool retried = false;  // shape restarted from 1e-8
  int iterations = 0;
  /// Inverse observed information, uncentred scale; NaN for fixed slopes or
  /// when the information matrix is not invertible.
  std::array<double, kThetaSize> se{};
  double t_beta1 = NAN;
  double t_alpha1 = NAN;
  std::string message;
};

/// Quasi-Newton MLE of one variant starting from a GEV fit mapped to PGEV
/// (lambda_c = lambda_p, sigma_c = sigma lambda_p^-gamma). On failure the
/// shape start is reset to 1e-8 and the fit retried once.
VariantFit fit_pgev(std::span<const double> z, std::span<const double> x, double c, Variant variant,
                    const GevParams& init, const ThresholdSpec& spec = {},
                    const FitOptions& options = {});

/// Same, from an explicit starting theta (its variant field is ignored).
VariantFit fit_pgev_from(std::span<const double> z, std::span<const double> x,
                         const PgevThetaCov& start, Variant variant, const FitOptions& options = {});

struct PixelFit {
  long long pixel_id = 0;
  GevFit gev;
  double threshold = NAN;
  std::array<VariantFit, 4> variants{};  // indexed by Variant
  std::string skip_reason;               // non-empty when the pixel cannot be used

  const VariantFit& operator[](Variant v) const { return variants[static_cast<std::size_t>(v)]; }
  VariantFit& operator[](Variant v) { return variants[static_cast<std::size_t>(v)]; }
  bool all_converged() const;
};

/// Stationary GEV fit, threshold, then the four variants. Restricted models
/// are fitted first and warm-start the larger ones, so nested log-likelihoods
/// are ordered up to optimizer tolerance.
PixelFit fit_pixel(long long pixel_id, std::span<const double> z, std::span<const double> x,
                   const ThresholdSpec& spec = {}, const FitOptions& options = {});

/// Per-pixel fits in pixel order; x is the covariate on the grid's year axis.
std::vector<PixelFit> fit_grid(const io::Grid& grid, std::span<const double> x,
                               const ThresholdSpec& spec = {}, const FitOptions& options = {},
                               unsigned threads = 1);

}  // namespace pgev::fit
