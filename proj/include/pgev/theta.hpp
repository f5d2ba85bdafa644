#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string_view>

#include "pgev/evd.hpp"

namespace pgev {

/// Covariate structure of a PGEV fit. Order is the AIC tie-break preference
/// (fewer parameters first, RateOnly before ScaleOnly).
enum class Variant { Stationary = 0, RateOnly = 1, ScaleOnly = 2, Full = 3 };

inline constexpr std::array<Variant, 4> kAllVariants = {Variant::Stationary, Variant::RateOnly,
                                                        Variant::ScaleOnly, Variant::Full};

constexpr std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Stationary: return "Stationary";
    case Variant::RateOnly: return "RateOnly";
    case Variant::ScaleOnly: return "ScaleOnly";
    case Variant::Full: return "Full";
  }
  return "?";
}

std::optional<Variant> parse_variant(std::string_view s);

constexpr bool has_rate_slope(Variant v) { return v == Variant::RateOnly || v == Variant::Full; }
constexpr bool has_scale_slope(Variant v) { return v == Variant::ScaleOnly || v == Variant::Full; }

/// Number of free parameters (threshold excluded).
constexpr int parameter_count(Variant v) {
  return 3 + (has_rate_slope(v) ? 1 : 0) + (has_scale_slope(v) ? 1 : 0);
}

/// Covariate PGEV parameters: log lambda_c(x) = beta0 + beta1 x,
/// log sigma_c(x) = alpha0 + alpha1 x, shape gamma, fixed threshold c.
struct PgevThetaCov {
  double beta0 = 0.0;
  double beta1 = 0.0;
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  double gamma = 0.0;
  double c = 0.0;
  Variant variant = Variant::Full;

  double log_rate(double x) const { return beta0 + beta1 * x; }
  double log_scale(double x) const { return alpha0 + alpha1 * x; }
  PgevParams at(double x) const {
    return {std::exp(log_rate(x)), std::exp(log_scale(x)), gamma, c};
  }
  /// Zeroes the slopes the variant excludes.
  PgevThetaCov constrained() const {
    PgevThetaCov t = *this;
    if (!has_rate_slope(variant)) t.beta1 = 0.0;
    if (!has_scale_slope(variant)) t.alpha1 = 0.0;
    return t;
  }
};

}  // namespace pgev
