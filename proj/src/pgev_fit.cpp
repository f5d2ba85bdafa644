#include "pgev/pgev_fit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pgev/optimize.hpp"
#include "pgev/parallel.hpp"

namespace pgev::fit {
namespace {

// log1p(w) / w, smooth through w = 0.
double log1p_ratio(double w) {
  if (std::abs(w) < 1e-4) return 1.0 - w * (0.5 - w * (1.0 / 3.0 - 0.25 * w));
  return std::log1p(w) / w;
}

// (w / (1 + w) - log1p(w)) / w^2, smooth through w = 0.
double dlog_ratio(double w) {
  if (std::abs(w) < 1e-3) {
    return -0.5 + w * (2.0 / 3.0 + w * (-0.75 + w * (0.8 + w * (-5.0 / 6.0 + w * 6.0 / 7.0))));
  }
  return (w / (1.0 + w) - std::log1p(w)) / (w * w);
}

// One observation's log-density in PGEV form with eta = log rate, a = log
// scale, y = z - c, and its partial derivatives. With eta = 0 and y = z - mu
// this is the GEV log-density.
struct ObsTerms {
  double value, d_eta, d_a, d_gamma, d_y;
};

bool obs_terms(double eta, double a, double gamma, double y, ObsTerms& o) {
  const double sigma = std::exp(a);
  const double r = y / sigma;
  const double w = gamma * r;
  if (!(w > -1.0)) return false;
  const double one_w = 1.0 + w;
  const double log_t = std::log1p(w);
  const double log_t_over_gamma = r * log1p_ratio(w);
  const double lam_t = std::exp(eta - log_t_over_gamma);
  o.value = eta - a - log_t - log_t_over_gamma - lam_t;
  o.d_eta = 1.0 - lam_t;
  o.d_a = -1.0 + (w + r) / one_w - lam_t * r / one_w;
  const double d_lg = r * r * dlog_ratio(w);
  o.d_gamma = -r / one_w - d_lg * (1.0 - lam_t);
  o.d_y = (lam_t - gamma - 1.0) / (sigma * one_w);
  return std::isfinite(o.value);
}

void check_inputs(const PgevThetaCov& th, std::span<const double> z, std::span<const double> x) {
  if (z.size() != x.size()) throw std::domain_error("pgev_loglik: z and x lengths differ");
  for (double v : {th.beta0, th.beta1, th.alpha0, th.alpha1, th.gamma, th.c}) {
    if (!std::isfinite(v)) throw std::domain_error("pgev_loglik: non-finite parameter");
  }
  for (std::size_t t = 0; t < z.size(); ++t) {
    if (!std::isfinite(z[t]) || !std::isfinite(x[t])) {
      throw std::domain_error("pgev_loglik: non-finite observation or covariate");
    }
  }
}

// Unchecked accumulation; returns false on a support violation.
bool accumulate(const PgevThetaCov& th, std::span<const double> z, std::span<const double> x,
                LoglikGradient& out) {
  out = {};
  ObsTerms o{};
  for (std::size_t t = 0; t < z.size(); ++t) {
    if (!obs_terms(th.log_rate(x[t]), th.log_scale(x[t]), th.gamma, z[t] - th.c, o)) return false;
    out.value += o.value;
    out.gradient[0] += o.d_eta;
    out.gradient[1] += o.d_eta * x[t];
    out.gradient[2] += o.d_a;
    out.gradient[3] += o.d_a * x[t];
    out.gradient[4] += o.d_gamma;
  }
  return std::isfinite(out.value);
}

std::vector<int> free_indices(Variant v) {
  std::vector<int> idx{0};
  if (has_rate_slope(v)) idx.push_back(1);
  idx.push_back(2);
  if (has_scale_slope(v)) idx.push_back(3);
  idx.push_back(4);
  return idx;
}

std::array<double, kThetaSize> to_array(const PgevThetaCov& t) {
  return {t.beta0, t.beta1, t.alpha0, t.alpha1, t.gamma};
}

PgevThetaCov from_array(const std::array<double, kThetaSize>& a, double c, Variant v) {
  return {a[0], a[1], a[2], a[3], a[4], c, v};
}

// Gumbel moment start on standardized data.
GevParams moment_start(double gamma0) {
  const double sigma0 = std::sqrt(6.0) / 3.14159265358979323846;
  return {-0.5772156649015329 * sigma0, sigma0, gamma0};
}

GevFit fit_gev_attempt(std::span<const double> zs, double gamma0) {
  const GevParams s0 = moment_start(gamma0);
  optim::Objective f = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) -> double {
    double value = 0.0, g_mu = 0.0, g_a = 0.0, g_gamma = 0.0;
    ObsTerms o{};
    for (double v : zs) {
      if (!obs_terms(0.0, p[1], p[2], v - p[0], o)) return INFINITY;
      value += o.value;
      g_mu -= o.d_y;
      g_a += o.d_a;
      g_gamma += o.d_gamma;
    }
    if (!std::isfinite(value)) return INFINITY;
    if (grad) *grad = -Eigen::Vector3d(g_mu, g_a, g_gamma);
    return -value;
  };
  const auto res = optim::minimize_bfgs(f, Eigen::Vector3d(s0.mu, std::log(s0.sigma), s0.gamma));
  GevFit fit;
  fit.params = {res.x[0], std::exp(res.x[1]), res.x[2]};
  fit.loglik = std::isfinite(res.value) ? -res.value : -INFINITY;
  fit.converged = res.converged;
  fit.message = res.message;
  return fit;
}

struct Attempt {
  PgevThetaCov theta;
  optim::BfgsResult result;
};

Attempt run_variant(std::span<const double> z, std::span<const double> xc, const PgevThetaCov& start,
                    Variant variant, const FitOptions& options) {
  const auto idx = free_indices(variant);
  const auto base = to_array(start.constrained());
  const double c = start.c;
  auto unpack = [&](const Eigen::VectorXd& p) {
    auto a = base;
    if (!has_rate_slope(variant)) a[1] = 0.0;
    if (!has_scale_slope(variant)) a[3] = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) a[static_cast<std::size_t>(idx[k])] = p[static_cast<Eigen::Index>(k)];
    return from_array(a, c, variant);
  };
  optim::Objective f = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) -> double {
    LoglikGradient lg;
    if (!accumulate(unpack(p), z, xc, lg)) return INFINITY;
    if (grad) {
      grad->resize(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) {
        (*grad)[static_cast<Eigen::Index>(k)] = -lg.gradient[static_cast<std::size_t>(idx[k])];
      }
    }
    return -lg.value;
  };
  Eigen::VectorXd p0(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    p0[static_cast<Eigen::Index>(k)] = base[static_cast<std::size_t>(idx[k])];
  }
  optim::BfgsOptions bo;
  bo.max_iterations = options.max_iterations;
  bo.gradient_tolerance = options.gradient_tolerance;
  Attempt att{unpack(p0), optim::minimize_bfgs(f, p0, bo)};
  att.theta = unpack(att.result.x);
  return att;
}

// Observed-information standard errors on the centred scale, mapped back to
// the uncentred intercepts.
void standard_errors(VariantFit& fit, std::span<const double> z, std::span<const double> xc,
                     const PgevThetaCov& centred, double x_mean) {
  fit.se.fill(NAN);
  const auto idx = free_indices(fit.theta.variant);
  const auto m = static_cast<Eigen::Index>(idx.size());
  const auto base = to_array(centred);
  optim::Objective f = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) -> double {
    auto a = base;
    for (Eigen::Index k = 0; k < m; ++k) a[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = p[k];
    LoglikGradient lg;
    if (!accumulate(from_array(a, centred.c, centred.variant), z, xc, lg)) return INFINITY;
    if (grad) {
      grad->resize(m);
      for (Eigen::Index k = 0; k < m; ++k) (*grad)[k] = -lg.gradient[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    }
    return -lg.value;
  };
  Eigen::VectorXd p(m);
  for (Eigen::Index k = 0; k < m; ++k) p[k] = base[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
  const Eigen::MatrixXd info = optim::numeric_hessian(f, p);
  if (!info.allFinite()) return;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return;
  const Eigen::MatrixXd cov_free = ldlt.solve(Eigen::MatrixXd::Identity(m, m));

  // Embed into the full 5x5 covariance, then apply the uncentring Jacobian
  // beta0 = beta0' - beta1 x_mean, alpha0 = alpha0' - alpha1 x_mean.
  Eigen::Matrix<double, 5, 5> cov = Eigen::Matrix<double, 5, 5>::Zero();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) cov(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]) = cov_free(i, j);
  }
  Eigen::Matrix<double, 5, 5> jac = Eigen::Matrix<double, 5, 5>::Identity();
  jac(0, 1) = -x_mean;
  jac(2, 3) = -x_mean;
  const Eigen::Matrix<double, 5, 5> cov_u = jac * cov * jac.transpose();
  for (int k : idx) {
    const double v = cov_u(k, k);
    fit.se[static_cast<std::size_t>(k)] = v > 0.0 ? std::sqrt(v) : NAN;
  }
  if (has_rate_slope(fit.theta.variant)) fit.t_beta1 = fit.theta.beta1 / fit.se[1];
  if (has_scale_slope(fit.theta.variant)) fit.t_alpha1 = fit.theta.alpha1 / fit.se[3];
}

PgevThetaCov centre(const PgevThetaCov& t, double x_mean) {
  PgevThetaCov out = t;
  out.beta0 += t.beta1 * x_mean;
  out.alpha0 += t.alpha1 * x_mean;
  return out;
}

PgevThetaCov uncentre(const PgevThetaCov& t, double x_mean) {
  PgevThetaCov out = t;
  out.beta0 -= t.beta1 * x_mean;
  out.alpha0 -= t.alpha1 * x_mean;
  return out;
}

PgevThetaCov gev_to_theta(const GevParams& g, double c, double lambda_p, Variant v) {
  return {std::log(lambda_p), 0.0, std::log(g.sigma) - g.gamma * std::log(lambda_p), 0.0, g.gamma, c, v};
}

VariantFit fit_with_retry(std::span<const double> z, std::span<const double> x,
                          const PgevThetaCov& start, const PgevThetaCov* fallback, Variant variant,
                          const FitOptions& options) {
  if (z.size() != x.size()) throw std::invalid_argument("fit_pgev: z and x lengths differ");
  const double x_mean = x.empty() ? 0.0 : std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  std::vector<double> xc(x.begin(), x.end());
  for (auto& v : xc) v -= x_mean;

  Attempt best = run_variant(z, xc, centre(start, x_mean), variant, options);
  bool retried = false;
  if (!best.result.converged) {
    PgevThetaCov restart = fallback ? *fallback : start;
    restart.gamma = 1e-8;
    Attempt second = run_variant(z, xc, centre(restart, x_mean), variant, options);
    retried = true;
    const bool prefer_second = second.result.converged ||
                               (!best.result.converged && second.result.value < best.result.value);
    if (prefer_second) best = std::move(second);
  }

  VariantFit fit;
  fit.theta = uncentre(best.theta, x_mean);
  fit.theta.variant = variant;
  fit.loglik = std::isfinite(best.result.value) ? -best.result.value : -INFINITY;
  fit.converged = best.result.converged;
  fit.retried = retried;
  fit.iterations = best.result.iterations;
  fit.message = best.result.message;
  fit.se.fill(NAN);
  if (options.standard_errors && std::isfinite(fit.loglik)) {
    standard_errors(fit, z, xc, best.theta, x_mean);
  }
  return fit;
}

}  // namespace

double gev_loglik(const GevParams& p, std::span<const double> z) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.mu) || !std::isfinite(p.gamma)) {
    throw std::domain_error("gev_loglik: invalid parameters");
  }
  double value = 0.0;
  ObsTerms o{};
  for (double v : z) {
    if (!std::isfinite(v)) throw std::domain_error("gev_loglik: non-finite observation");
    if (!obs_terms(0.0, std::log(p.sigma), p.gamma, v - p.mu, o)) return -INFINITY;
    value += o.value;
  }
  return value;
}

GevFit fit_gev_stationary(std::span<const double> z) {
  if (z.size() < 10) throw std::invalid_argument("fit_gev_stationary: need at least 10 values");
  double mean = 0.0;
  for (double v : z) {
    if (!std::isfinite(v)) throw std::invalid_argument("fit_gev_stationary: non-finite value");
    mean += v;
  }
  mean /= static_cast<double>(z.size());
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(z.size() - 1));
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
    throw std::invalid_argument("fit_gev_stationary: constant series has a degenerate likelihood");
  }
  std::vector<double> zs(z.begin(), z.end());
  for (auto& v : zs) v = (v - mean) / sd;

  GevFit best;
  best.loglik = -INFINITY;
  for (double gamma0 : {0.1, 1e-8}) {
    GevFit f = fit_gev_attempt(zs, gamma0);
    if ((f.converged && !best.converged) || (f.converged == best.converged && f.loglik > best.loglik)) {
      best = f;
    }
    if (best.converged) break;
  }
  best.params.mu = mean + sd * best.params.mu;
  best.params.sigma *= sd;
  best.loglik -= static_cast<double>(z.size()) * std::log(sd);
  return best;
}

double threshold_from_gev(const GevParams& g, const ThresholdSpec& spec) {
  if (!(spec.p > 0.0 && spec.p < 1.0)) throw std::domain_error("threshold p must lie in (0, 1)");
  const double log_lambda = std::log(spec.lambda_p());
  if (std::abs(g.gamma) <= kShapeTolerance) return g.mu - g.sigma * log_lambda;
  // 1 - lambda^-gamma = -expm1(-gamma log lambda)
  return g.mu + g.sigma * std::expm1(-g.gamma * log_lambda) / g.gamma;
}

double pgev_loglik(const PgevThetaCov& theta, std::span<const double> z, std::span<const double> x) {
  check_inputs(theta, z, x);
  LoglikGradient lg;
  return accumulate(theta.constrained(), z, x, lg) ? lg.value : -INFINITY;
}

LoglikGradient pgev_loglik_gradient(const PgevThetaCov& theta, std::span<const double> z,
                                    std::span<const double> x) {
  check_inputs(theta, z, x);
  LoglikGradient lg;
  if (!accumulate(theta.constrained(), z, x, lg)) {
    lg.value = -INFINITY;
    lg.gradient.fill(NAN);
  }
  return lg;
}

VariantFit fit_pgev(std::span<const double> z, std::span<const double> x, double c, Variant variant,
                    const GevParams& init, const ThresholdSpec& spec, const FitOptions& options) {
  const PgevThetaCov start = gev_to_theta(init, c, spec.lambda_p(), variant);
  return fit_with_retry(z, x, start, nullptr, variant, options);
}

VariantFit fit_pgev_from(std::span<const double> z, std::span<const double> x,
                         const PgevThetaCov& start, Variant variant, const FitOptions& options) {
  return fit_with_retry(z, x, start, nullptr, variant, options);
}

bool PixelFit::all_converged() const {
  if (!skip_reason.empty() || !gev.converged) return false;
  return std::all_of(variants.begin(), variants.end(), [](const VariantFit& f) { return f.converged; });
}

PixelFit fit_pixel(long long pixel_id, std::span<const double> z, std::span<const double> x,
                   const ThresholdSpec& spec, const FitOptions& options) {
  PixelFit px;
  px.pixel_id = pixel_id;
  for (auto v : kAllVariants) px[v].theta.variant = v;
  try {
    px.gev = fit_gev_stationary(z);
  } catch (const std::invalid_argument& e) {
    px.skip_reason = e.what();
    return px;
  }
  if (!px.gev.converged) {
    px.skip_reason = "GEV fit did not converge: " + px.gev.message;
    return px;
  }
  px.threshold = threshold_from_gev(px.gev.params, spec);
  const PgevThetaCov gev_start = gev_to_theta(px.gev.params, px.threshold, spec.lambda_p(), Variant::Stationary);

  auto& stationary = px[Variant::Stationary];
  stationary = fit_with_retry(z, x, gev_start, &gev_start, Variant::Stationary, options);
  const PgevThetaCov& s_theta = stationary.converged ? stationary.theta : gev_start;
  px[Variant::RateOnly] = fit_with_retry(z, x, s_theta, &gev_start, Variant::RateOnly, options);
  px[Variant::ScaleOnly] = fit_with_retry(z, x, s_theta, &gev_start, Variant::ScaleOnly, options);

  const auto& rate = px[Variant::RateOnly];
  const auto& scale = px[Variant::ScaleOnly];
  PgevThetaCov full_start = rate.loglik >= scale.loglik ? rate.theta : scale.theta;
  if (!std::isfinite(rate.loglik) && !std::isfinite(scale.loglik)) full_start = s_theta;
  px[Variant::Full] = fit_with_retry(z, x, full_start, &gev_start, Variant::Full, options);

  if (!px.all_converged()) {
    std::string failed;
    for (auto v : kAllVariants) {
      if (!px[v].converged) failed += (failed.empty() ? "" : ";") + std::string(to_string(v));
    }
    px.skip_reason = "non-convergent variant(s): " + failed;
  }
  return px;
}

std::vector<PixelFit> fit_grid(const io::Grid& grid, std::span<const double> x,
                               const ThresholdSpec& spec, const FitOptions& options,
                               unsigned threads) {
  if (x.size() != grid.years.size()) {
    throw std::invalid_argument("fit_grid: covariate length differs from the year axis");
  }
  std::vector<PixelFit> out(grid.size());
  parallel_for(grid.size(), threads, [&](std::size_t i) {
    out[i] = fit_pixel(grid.pixels[i].pixel_id, grid.pixels[i].values, x, spec, options);
  });
  return out;
}

}  // namespace pgev::fit

namespace pgev {

std::optional<Variant> parse_variant(std::string_view s) {
  for (auto v : kAllVariants) {
    if (s == to_string(v)) return v;
  }
  return std::nullopt;
}

}  // namespace pgev
