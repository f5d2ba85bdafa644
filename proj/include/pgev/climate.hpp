#pragma once

#include <span>
#include <vector>

#include "pgev/evd.hpp"
#include "pgev/pgev_fit.hpp"
#include "pgev/theta.hpp"

namespace pgev::climate {

/// exp(slope * delta_x) - 1.
double relative_change(double slope, double delta_x);

/// Level exceeded within a year with probability q under the GEV.
double return_level(const GevParams& g, double q);

struct ScenarioSpec {
  double delta_x = 1.0;
  double q = 0.05;
  double x_low = 0.0;
};

/// Exceedance probability at x_low + delta_x of the return level R_q(x_low).
double scenario_exceedance(const PgevThetaCov& theta, const ScenarioSpec& spec);

/// Closed form for a rate-only change: 1 - (1 - q)^(delta_lambda + 1).
double rate_only_exceedance(double q, double delta_lambda);

struct ScenarioResult {
  long long pixel_id = 0;
  Variant variant = Variant::Stationary;
  double delta_x = 0.0;
  double q = 0.0;
  double delta_lambda = 0.0;
  double delta_sigma = 0.0;
  double r_q_low = 0.0;
  double prob_high = 0.0;
};

ScenarioResult scenario(long long pixel_id, const PgevThetaCov& theta, const ScenarioSpec& spec);

/// One row per (pixel, delta_x) in pixel order, using variants[i] for fits[i].
/// Pixels that are not fully converged are skipped.
std::vector<ScenarioResult> run_scenarios(const std::vector<fit::PixelFit>& fits,
                                          const std::vector<Variant>& variants,
                                          std::span<const double> delta_x, double q, double x_low);

}  // namespace pgev::climate
