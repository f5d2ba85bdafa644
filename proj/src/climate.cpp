#include "pgev/climate.hpp"

#include <cmath>
#include <stdexcept>

namespace pgev::climate {

double relative_change(double slope, double delta_x) { return std::expm1(slope * delta_x); }

double return_level(const GevParams& g, double q) {
  if (!(q > 0.0 && q < 1.0)) throw std::domain_error("return_level: q must lie in (0, 1)");
  if (!(g.sigma > 0.0)) throw std::domain_error("return_level: sigma must be positive");
  const double y = -std::log1p(-q);
  if (std::abs(g.gamma) <= kShapeTolerance) return g.mu - g.sigma * std::log(y);
  // 1 - y^-gamma = -expm1(-gamma log y)
  return g.mu + g.sigma * std::expm1(-g.gamma * std::log(y)) / g.gamma;
}

double scenario_exceedance(const PgevThetaCov& theta, const ScenarioSpec& spec) {
  const PgevThetaCov t = theta.constrained();
  const double r = return_level(pgev_to_gev(t.at(spec.x_low)), spec.q);
  return pgev_sf(r, t.at(spec.x_low + spec.delta_x));
}

double rate_only_exceedance(double q, double delta_lambda) {
  if (!(q > 0.0 && q < 1.0)) throw std::domain_error("rate_only_exceedance: q must lie in (0, 1)");
  return -std::expm1((delta_lambda + 1.0) * std::log1p(-q));
}

ScenarioResult scenario(long long pixel_id, const PgevThetaCov& theta, const ScenarioSpec& spec) {
  const PgevThetaCov t = theta.constrained();
  ScenarioResult r;
  r.pixel_id = pixel_id;
  r.variant = t.variant;
  r.delta_x = spec.delta_x;
  r.q = spec.q;
  r.delta_lambda = relative_change(t.beta1, spec.delta_x);
  r.delta_sigma = relative_change(t.alpha1, spec.delta_x);
  r.r_q_low = return_level(pgev_to_gev(t.at(spec.x_low)), spec.q);
  r.prob_high = scenario_exceedance(t, spec);
  return r;
}

std::vector<ScenarioResult> run_scenarios(const std::vector<fit::PixelFit>& fits,
                                          const std::vector<Variant>& variants,
                                          std::span<const double> delta_x, double q, double x_low) {
  if (variants.size() != fits.size()) throw std::invalid_argument("run_scenarios: one variant per fit");
  std::vector<ScenarioResult> out;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (!fits[i].all_converged()) continue;
    for (double dx : delta_x) {
      out.push_back(scenario(fits[i].pixel_id, fits[i][variants[i]].theta, {dx, q, x_low}));
    }
  }
  return out;
}

}  // namespace pgev::climate
