#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace pgev::spatial {

/// Matern covariance with zero nugget.
struct MaternParams {
  double sigma2 = 1.0;  // sill
  double nu = 0.5;      // smoothness
  double rho = 1.0;     // range, same unit as distances
};

/// C(0) = sigma2; C(h) = sigma2 2^(1-nu)/Gamma(nu) (h/rho)^nu K_nu(h/rho).
double matern_cov(double h, const MaternParams& p);
/// sigma2 - C(h).
double matern_semivariance(double h, const MaternParams& p);

/// Planar coordinates in km.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Point& a, const Point& b);

/// Equirectangular projection: 1 degree latitude = 110.574 km, longitude
/// scaled by the cosine of the reference latitude.
class Projection {
 public:
  static constexpr double kKmPerDegree = 110.574;

  /// Reference latitude is the mean of `lat`.
  static Projection fit(std::span<const double> lat, std::span<const double> lon);
  Projection(double lat0, double lon0);

  Point to_km(double lat, double lon) const;
  std::pair<double, double> to_degrees(const Point& p) const;  // (lat, lon)

 private:
  double lat0_, lon0_, cos_lat_;
};

struct Variogram {
  std::vector<double> lag;            // bin centres
  std::vector<double> mean_distance;  // mean pair distance per bin
  std::vector<double> semivariance;
  std::vector<std::size_t> count;
};

/// Matheron estimator over `bins` equal-width bins up to `max_distance`
/// (half the largest pairwise distance when <= 0). Empty bins are omitted.
Variogram empirical_variogram(std::span<const Point> points, std::span<const double> values,
                              int bins = 15, double max_distance = 0.0);

enum class VariogramMethod { LS, WLS, MLE };
std::string_view to_string(VariogramMethod m);
std::optional<VariogramMethod> parse_variogram_method(std::string_view s);

struct MaternFit {
  MaternParams params;
  VariogramMethod method = VariogramMethod::WLS;
  bool converged = false;
  double objective = 0.0;  // LS/WLS loss, or negative log-likelihood for MLE
};

/// LS minimizes squared semivariance residuals; WLS uses Cressie weights
/// N(h) / gamma_model(h)^2; MLE maximizes the zero-mean Gaussian likelihood of
/// `values` at `points`. Multi-start over nu in {0.15, 0.5, 1.5, 2.5}.
MaternFit fit_variogram(const Variogram& v, VariogramMethod method,
                        std::span<const Point> points = {}, std::span<const double> values = {});

Eigen::MatrixXd covariance_matrix(std::span<const Point> points, const MaternParams& p);

/// Lower Cholesky factor of a covariance matrix, with the smallest diagonal
/// jitter (0, then decades from 1e-12 up to max_relative_jitter, relative to
/// the mean diagonal) that makes it numerically positive definite.
struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};
CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& cov, double max_relative_jitter = 1e-6);

/// Zero-mean simple kriging: c0' C^-1 w at each target.
std::vector<double> krige(std::span<const Point> points, std::span<const double> values,
                          const MaternParams& p, std::span<const Point> targets);

/// Simple kriging of mean-centred values with the mean added back.
std::vector<double> krige_centered(std::span<const Point> points, std::span<const double> values,
                                   const MaternParams& p, std::span<const Point> targets);

/// Regular grid over the bounding box of `points` with the given spacing,
/// keeping cells within `radius` of some data point.
std::vector<Point> fine_grid(std::span<const Point> points, double spacing, double radius);

}  // namespace pgev::spatial
