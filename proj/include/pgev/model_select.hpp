#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pgev/data_io.hpp"
#include "pgev/pgev_fit.hpp"

namespace pgev::model {

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
double regularized_gamma_q(double a, double x);

/// Chi-square survival function. Throws std::domain_error for x < 0 or df < 1.
double chisq_sf(double x, int df);

enum class LrtTest { T1_lambda, T2_sigma, T3_both, Ta_full_vs_lambda, Tb_full_vs_sigma };

inline constexpr std::array<LrtTest, 5> kAllTests = {
    LrtTest::T1_lambda, LrtTest::T2_sigma, LrtTest::T3_both, LrtTest::Ta_full_vs_lambda,
    LrtTest::Tb_full_vs_sigma};

std::string_view to_string(LrtTest t);
std::optional<LrtTest> parse_test(std::string_view s);

/// Restricted (null) and larger model of a test, with its degrees of freedom.
struct LrtDesign {
  Variant restricted;
  Variant full;
  int df;
};
LrtDesign design(LrtTest t);

struct LrtResult {
  long long pixel_id = 0;
  LrtTest test = LrtTest::T1_lambda;
  double statistic = 0.0;
  int df = 1;
  double p_value = 1.0;
};

/// Lambda = -2 (l_restricted - l_full); values down to -1e-6 are clamped to 0.
/// Throws std::domain_error below that (the restricted fit beat the larger one).
double lrt_statistic(double loglik_restricted, double loglik_full);

struct PixelExclusion {
  long long pixel_id = 0;
  std::string reason;
};

struct LrtRun {
  std::vector<LrtResult> results;  // five per included pixel, pixel order then test order
  std::vector<PixelExclusion> excluded;
};

/// Pixels with a skip reason or any non-convergent variant are excluded and
/// listed with the reason.
LrtRun run_lrts(const std::vector<fit::PixelFit>& fits);

/// P-values of one test, in pixel order.
std::vector<double> pvalues(const LrtRun& run, LrtTest test);

double aic(double loglik, int k);

/// Lowest AIC; ties go to fewer parameters, then RateOnly before ScaleOnly.
Variant select_by_aic(const std::array<double, 4>& aics, bool include_stationary);
Variant select_by_aic(const fit::PixelFit& fit, bool include_stationary);

struct AicRow {
  long long pixel_id = 0;
  io::Region region = io::Region::North;
  std::array<double, 4> aic{};  // indexed by Variant
  Variant best_with_stationary = Variant::Stationary;
  Variant best_without_stationary = Variant::RateOnly;
};

struct AicTable {
  std::vector<AicRow> rows;
  /// counts[region][variant] of lowest-AIC models, over converged pixels.
  std::array<std::array<int, 4>, io::kRegionCount> with_stationary{};
  std::array<std::array<int, 4>, io::kRegionCount> without_stationary{};
};

/// `regions` is aligned with `fits`. Non-convergent pixels are left out.
AicTable aic_region_tables(const std::vector<fit::PixelFit>& fits,
                           const std::vector<io::Region>& regions);

struct QqPoint {
  double rank_frac = 0.0;  // i / n
  double p = 0.0;          // i-th smallest p-value
};

/// Throws std::invalid_argument on an empty input.
std::vector<QqPoint> pvalue_qq_curve(std::vector<double> pvalues);

}  // namespace pgev::model
