#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pgev/data_io.hpp"
#include "pgev/model_select.hpp"
#include "pgev/normal.hpp"
#include "pgev/pgev_fit.hpp"
#include "pgev/spatial_gp.hpp"
#include "pgev/theta.hpp"

namespace pgev::copula {

/// Uniform scores are clamped to [kUniformClamp, 1 - kUniformClamp] before
/// the normal quantile.
inline constexpr double kUniformClamp = 1e-12;

/// w = Phi^-1(F(z)) under the given PGEV parameters, and its inverse.
double to_gaussian(double z, const PgevParams& p);
double from_gaussian(double w, const PgevParams& p);

/// Gaussian scores of a grid under per-pixel models (thetas aligned with the
/// pixels) with year-specific parameters theta.at(x[t]). Result is [year][pixel].
std::vector<std::vector<double>> to_gaussian(const io::Grid& grid, const std::vector<PgevThetaCov>& thetas,
                                             std::span<const double> x);

/// Inverse of to_gaussian: replaces the values of `shape` (which supplies the
/// pixels and year axis) with back-transformed scores.
io::Grid from_gaussian(const std::vector<std::vector<double>>& w, const io::Grid& shape,
                       const std::vector<PgevThetaCov>& thetas, std::span<const double> x);

/// One year's Gaussian scores with their fitted Matern model.
struct CopulaField {
  int year = 0;
  std::vector<double> w;
  spatial::MaternFit model;
  double mean = 0.0;
  double sd = 0.0;
  /// |mean| <= 0.2 and sd in [0.7, 1.3].
  bool in_sanity_band() const;
};

std::vector<CopulaField> fit_year_fields(const std::vector<std::vector<double>>& w, const std::vector<int>& years,
                                         std::span<const spatial::Point> points,
                                         spatial::VariogramMethod method, unsigned threads = 1);

/// Resamples the year models with replacement and draws one zero-mean field
/// per year from the resampled model. Streams are keyed by (seed, replicate).
class FieldSampler {
 public:
  FieldSampler(const std::vector<CopulaField>& fields, std::span<const spatial::Point> points);

  /// Scores [year][pixel] for one replicate.
  std::vector<std::vector<double>> draw(std::uint64_t seed, std::uint64_t replicate) const;
  std::size_t years() const { return factors_.size(); }

 private:
  std::vector<Eigen::MatrixXd> factors_;
  std::size_t pixels_ = 0;
};

/// B replicate grids under the null models.
std::vector<io::Grid> simulate_null_grids(const std::vector<CopulaField>& fields,
                                          std::span<const spatial::Point> points, const io::Grid& shape,
                                          const std::vector<PgevThetaCov>& null_thetas,
                                          std::span<const double> x, std::size_t replicates,
                                          std::uint64_t seed, unsigned threads = 1);

struct BandPoint {
  double rank_frac = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Pointwise (1 - level)/2 and (1 + level)/2 quantiles (linear interpolation
/// between order statistics) across replicate p-value curves. Each curve is
/// sorted and read at ranks i/n, i = 1..n, through its empirical quantile
/// function, so replicates may differ in length.
std::vector<BandPoint> qq_band(const std::vector<std::vector<double>>& curves, std::size_t n,
                               double level = 0.95);

/// The diagonal passes through rank i when [lo_i, hi_i] meets [(i-1)/n, i/n],
/// the step of the uniform quantile function on that rank.
bool band_contains_diagonal(const std::vector<BandPoint>& band);
std::size_t diagonal_misses(const std::vector<BandPoint>& band);

struct NullBandOptions {
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  spatial::VariogramMethod method = spatial::VariogramMethod::WLS;
  fit::ThresholdSpec threshold;
};

struct TestBand {
  model::LrtTest test = model::LrtTest::T1_lambda;
  std::vector<BandPoint> band;
  std::vector<double> observed;  // sorted observed p-values, may be empty
};

struct NullBandReport {
  std::vector<TestBand> bands;  // test order
  std::size_t pixels_used = 0;
  std::size_t years_outside_sanity = 0;
  std::size_t nonconverged_year_fits = 0;
  std::size_t replicate_pixels_excluded = 0;
  std::vector<CopulaField> stationary_fields;
};

/// Confidence bands for the p-value QQ curves of all five tests. Tests 1-3
/// are simulated under the Stationary fits, Test a under RateOnly and Test b
/// under ScaleOnly. Only fully converged pixels take part.
NullBandReport null_bands(const io::Grid& grid, std::span<const double> x,
                          const std::vector<fit::PixelFit>& fits, const NullBandOptions& options);

/// Run-rule declustering: a cluster opens at a value above the threshold and
/// closes once r consecutive values are at or below it. Returns cluster maxima.
std::vector<double> decluster(std::span<const double> daily, double threshold, int r = 3);

/// The series with each cluster replaced by its maximum; values outside
/// clusters are kept.
std::vector<double> declustered_series(std::span<const double> daily, double threshold, int r = 3);

/// Empirical p-quantile of the declustered series.
double sample_quantile_check(std::span<const double> daily, double threshold, double p = 0.99,
                             int r = 3);

/// Sample quantile with linear interpolation between order statistics.
double quantile_type7(std::vector<double> v, double p);

}  // namespace pgev::copula
