#pragma once

namespace pgev::copula {

/// Standard normal CDF via erfc.
double norm_cdf(double x);

/// Inverse standard normal CDF: Acklam's rational approximation refined by
/// one Halley step. q must lie in (0, 1).
double norm_quantile(double q);

}  // namespace pgev::copula
