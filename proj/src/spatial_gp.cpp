#include "pgev/spatial_gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pgev/optimize.hpp"

namespace pgev::spatial {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNuMax = 5.0;

void check_params(const MaternParams& p) {
  if (!(p.sigma2 > 0.0) || !(p.nu > 0.0) || !(p.rho > 0.0) || !std::isfinite(p.sigma2) ||
      !std::isfinite(p.nu) || !std::isfinite(p.rho)) {
    throw std::domain_error("Matern parameters must be positive and finite");
  }
}

// Correlation at scaled distance t > 0.
double matern_corr(double t, double nu) {
  if (nu == 0.5) return std::exp(-t);
  if (nu == 1.5) return (1.0 + t) * std::exp(-t);
  if (nu == 2.5) return (1.0 + t + t * t / 3.0) * std::exp(-t);
  if (t > 700.0) return 0.0;
  const double log_front = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(t);
  return std::exp(log_front) * std::cyl_bessel_k(nu, t);
}

}  // namespace

double matern_cov(double h, const MaternParams& p) {
  if (!(h >= 0.0)) throw std::domain_error("matern_cov: distance must be >= 0");
  check_params(p);
  if (h == 0.0) return p.sigma2;
  return p.sigma2 * std::min(1.0, matern_corr(h / p.rho, p.nu));
}

double matern_semivariance(double h, const MaternParams& p) { return p.sigma2 - matern_cov(h, p); }

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

Projection Projection::fit(std::span<const double> lat, std::span<const double> lon) {
  if (lat.empty() || lat.size() != lon.size()) {
    throw std::invalid_argument("Projection::fit: need matching non-empty coordinates");
  }
  const double n = static_cast<double>(lat.size());
  return {std::accumulate(lat.begin(), lat.end(), 0.0) / n,
          std::accumulate(lon.begin(), lon.end(), 0.0) / n};
}

Projection::Projection(double lat0, double lon0)
    : lat0_(lat0), lon0_(lon0), cos_lat_(std::cos(lat0 * kPi / 180.0)) {}

Point Projection::to_km(double lat, double lon) const {
  return {(lon - lon0_) * cos_lat_ * kKmPerDegree, (lat - lat0_) * kKmPerDegree};
}

std::pair<double, double> Projection::to_degrees(const Point& p) const {
  return {lat0_ + p.y / kKmPerDegree, lon0_ + p.x / (cos_lat_ * kKmPerDegree)};
}

Variogram empirical_variogram(std::span<const Point> points, std::span<const double> values,
                              int bins, double max_distance) {
  const std::size_t n = points.size();
  if (n < 2) throw std::invalid_argument("empirical_variogram: need at least 2 points");
  if (values.size() != n) throw std::invalid_argument("empirical_variogram: one value per point");
  if (bins < 1) throw std::invalid_argument("empirical_variogram: bins must be >= 1");
  if (max_distance <= 0.0) {
    double longest = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) longest = std::max(longest, distance(points[i], points[j]));
    }
    max_distance = 0.5 * longest;
  }
  if (!(max_distance > 0.0)) throw std::invalid_argument("empirical_variogram: all points coincide");

  const double width = max_distance / bins;
  const auto nb = static_cast<std::size_t>(bins);
  std::vector<double> sum_sq(nb, 0.0), sum_d(nb, 0.0);
  std::vector<std::size_t> count(nb, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(points[i], points[j]);
      if (d > max_distance) continue;
      const auto b = std::min(nb - 1, static_cast<std::size_t>(d / width));
      const double diff = values[i] - values[j];
      sum_sq[b] += diff * diff;
      sum_d[b] += d;
      ++count[b];
    }
  }
  Variogram v;
  for (std::size_t b = 0; b < nb; ++b) {
    if (count[b] == 0) continue;
    const double nbin = static_cast<double>(count[b]);
    v.lag.push_back((static_cast<double>(b) + 0.5) * width);
    v.mean_distance.push_back(sum_d[b] / nbin);
    v.semivariance.push_back(sum_sq[b] / (2.0 * nbin));
    v.count.push_back(count[b]);
  }
  return v;
}

std::string_view to_string(VariogramMethod m) {
  switch (m) {
    case VariogramMethod::LS: return "LS";
    case VariogramMethod::WLS: return "WLS";
    case VariogramMethod::MLE: return "MLE";
  }
  return "?";
}

std::optional<VariogramMethod> parse_variogram_method(std::string_view s) {
  for (auto m : {VariogramMethod::LS, VariogramMethod::WLS, VariogramMethod::MLE}) {
    if (s == to_string(m)) return m;
  }
  return std::nullopt;
}

Eigen::MatrixXd covariance_matrix(std::span<const Point> points, const MaternParams& p) {
  check_params(p);
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = p.sigma2;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = matern_cov(distance(points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]), p);
      c(i, j) = v;
      c(j, i) = v;
    }
  }
  return c;
}

CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& cov, double max_relative_jitter) {
  const auto n = cov.rows();
  if (n == 0 || cov.cols() != n) throw std::invalid_argument("cholesky_with_jitter: need a square matrix");
  const double scale = cov.diagonal().mean();
  std::vector<double> ladder{0.0};
  for (double j = 1e-12; j <= max_relative_jitter * (1.0 + 1e-9); j *= 10.0) ladder.push_back(j);
  for (double rel : ladder) {
    Eigen::MatrixXd a = cov;
    a.diagonal().array() += rel * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd lower = llt.matrixL();
    const auto diag = lower.diagonal();
    if (!diag.allFinite() || diag.minCoeff() <= 1e-14 * std::sqrt(scale)) continue;
    return {std::move(lower), rel * scale};
  }
  throw std::runtime_error("covariance matrix is not positive definite after maximum jitter");
}

namespace {

double zero_mean_nll(std::span<const Point> points, std::span<const double> w, const MaternParams& p) {
  const Eigen::MatrixXd c = covariance_matrix(points, p);
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() != Eigen::Success) return INFINITY;
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  const Eigen::VectorXd y = llt.matrixL().solve(wv);
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if (diag.minCoeff() <= 0.0) return INFINITY;
  const double log_det = 2.0 * diag.array().log().sum();
  return 0.5 * (log_det + y.squaredNorm() + static_cast<double>(w.size()) * std::log(2.0 * kPi));
}

}  // namespace

MaternFit fit_variogram(const Variogram& v, VariogramMethod method, std::span<const Point> points,
                        std::span<const double> values) {
  std::vector<double> centred;
  double scale_sill = 0.0;
  double scale_range = 0.0;
  if (method == VariogramMethod::MLE) {
    if (points.size() < 3 || values.size() != points.size()) {
      throw std::invalid_argument("fit_variogram: MLE needs at least 3 points with values");
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    centred.assign(values.begin(), values.end());
    for (auto& x : centred) x -= mean;
    for (double x : centred) scale_sill += x * x;
    scale_sill /= static_cast<double>(centred.size());
    for (std::size_t i = 1; i < points.size(); ++i) scale_range = std::max(scale_range, distance(points[0], points[i]));
  } else {
    if (v.lag.size() < 4) throw std::invalid_argument("fit_variogram: need at least 4 non-empty bins");
    scale_sill = *std::max_element(v.semivariance.begin(), v.semivariance.end());
    scale_range = v.mean_distance.back();
  }
  if (!(scale_sill > 0.0)) throw std::invalid_argument("fit_variogram: field has zero variance");
  if (!(scale_range > 0.0)) throw std::invalid_argument("fit_variogram: zero distance range");

  double total_count = 0.0;
  for (auto c : v.count) total_count += static_cast<double>(c);

  // Parameters are (log sill, log nu, log range) relative to the data scales.
  auto unpack = [&](const Eigen::VectorXd& p) {
    return MaternParams{scale_sill * std::exp(p[0]), std::exp(p[1]), scale_range * std::exp(p[2])};
  };
  auto loss = [&](const Eigen::VectorXd& p) -> double {
    // Sill and range stay within [1e-3, 10] times the data scales.
    constexpr double lo = -6.907755278982137, hi = 2.302585092994046;
    if (!p.allFinite() || p[0] < lo || p[0] > hi || p[2] < lo || p[2] > hi) return INFINITY;
    const MaternParams m = unpack(p);
    if (m.nu > kNuMax || m.nu < 1e-3) return INFINITY;
    double f = 0.0;
    switch (method) {
      case VariogramMethod::LS:
        for (std::size_t b = 0; b < v.lag.size(); ++b) {
          const double r = (v.semivariance[b] - matern_semivariance(v.mean_distance[b], m)) / scale_sill;
          f += r * r;
        }
        return f;
      case VariogramMethod::WLS:
        for (std::size_t b = 0; b < v.lag.size(); ++b) {
          const double model = matern_semivariance(v.mean_distance[b], m);
          if (!(model > 0.0)) return INFINITY;
          const double r = v.semivariance[b] / model - 1.0;
          f += static_cast<double>(v.count[b]) * r * r;
        }
        return f / total_count;
      case VariogramMethod::MLE:
        return zero_mean_nll(points, centred, m);
    }
    return INFINITY;
  };

  const optim::Objective objective = optim::with_numeric_gradient(loss);
  MaternFit best;
  best.method = method;
  best.objective = INFINITY;
  bool have = false;
  for (double nu0 : {0.15, 0.5, 1.5, 2.5}) {
    Eigen::VectorXd p0(3);
    p0 << 0.0, std::log(nu0), std::log(0.3);
    if (!std::isfinite(loss(p0))) continue;
    const auto res = optim::minimize_bfgs(objective, p0);
    if (!std::isfinite(res.value)) continue;
    const bool better = !have || (res.converged && !best.converged) ||
                        (res.converged == best.converged && res.value < best.objective);
    if (better) {
      best.params = unpack(res.x);
      best.objective = res.value;
      best.converged = res.converged;
      have = true;
    }
  }
  if (!have) throw std::runtime_error("fit_variogram: no feasible starting point");
  if (method == VariogramMethod::WLS) best.objective *= total_count;
  return best;
}

std::vector<double> krige(std::span<const Point> points, std::span<const double> values,
                          const MaternParams& p, std::span<const Point> targets) {
  if (points.empty() || values.size() != points.size()) {
    throw std::invalid_argument("krige: need one value per data point");
  }
  const CholeskyFactor chol = cholesky_with_jitter(covariance_matrix(points, p));
  const Eigen::Map<const Eigen::VectorXd> w(values.data(), static_cast<Eigen::Index>(values.size()));
  const auto l = chol.lower.triangularView<Eigen::Lower>();
  const Eigen::VectorXd weights = l.transpose().solve(l.solve(w));
  std::vector<double> out(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      s += matern_cov(distance(targets[t], points[i]), p) * weights[static_cast<Eigen::Index>(i)];
    }
    out[t] = s;
  }
  return out;
}

std::vector<double> krige_centered(std::span<const Point> points, std::span<const double> values,
                                   const MaternParams& p, std::span<const Point> targets) {
  if (values.empty()) throw std::invalid_argument("krige_centered: no data");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::vector<double> centred(values.begin(), values.end());
  for (auto& v : centred) v -= mean;
  auto out = krige(points, centred, p, targets);
  for (auto& v : out) v += mean;
  return out;
}

std::vector<Point> fine_grid(std::span<const Point> points, double spacing, double radius) {
  if (points.empty()) throw std::invalid_argument("fine_grid: no data points");
  if (!(spacing > 0.0) || !(radius >= 0.0)) throw std::invalid_argument("fine_grid: bad spacing or radius");
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& p : points) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const auto nx = static_cast<long>(std::floor((x1 - x0) / spacing + 1e-9)) + 1;
  const auto ny = static_cast<long>(std::floor((y1 - y0) / spacing + 1e-9)) + 1;
  std::vector<Point> out;
  for (long j = 0; j < ny; ++j) {
    for (long i = 0; i < nx; ++i) {
      const Point cell{x0 + static_cast<double>(i) * spacing, y0 + static_cast<double>(j) * spacing};
      const bool near = std::any_of(points.begin(), points.end(),
                                    [&](const Point& p) { return distance(cell, p) <= radius; });
      if (near) out.push_back(cell);
    }
  }
  return out;
}

}  // namespace pgev::spatial
