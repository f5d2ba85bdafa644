#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pgev::eda {

/// Cleveland's robust locally weighted linear regression: tricube
/// neighbourhood weights over the nearest floor(span * n) points (at least 2) and
/// `iterations` bisquare robustness passes. Output is aligned with the input.
std::vector<double> lowess(std::span<const double> x, std::span<const double> y,
                           double span = 2.0 / 3.0, int iterations = 3);

struct Acf {
  std::vector<double> values;  // lags 0..max_lag
  double band = 0.0;           // 95% pointwise half-width, 1.96 / sqrt(T)
};

/// Biased-denominator sample autocorrelation.
Acf sample_acf(std::span<const double> z, std::size_t max_lag);

/// Modified band depth with two-curve bands. curves[i][t].
std::vector<double> modified_band_depth(const std::vector<std::vector<double>>& curves);

struct FunctionalBoxplot {
  std::size_t median_index = 0;        // position of the deepest curve
  long long median_id = 0;
  std::vector<double> median;
  std::vector<double> band_lo, band_hi;    // envelope of the ceil(n/2) deepest curves
  std::vector<double> fence_lo, fence_hi;  // band widened by 1.5 band heights
  std::vector<long long> outlier_ids;
  std::vector<double> depth;
};

/// Requires at least 3 curves on a common axis; `ids` labels the curves.
FunctionalBoxplot functional_boxplot(const std::vector<std::vector<double>>& curves,
                                     const std::vector<long long>& ids);

}  // namespace pgev::eda
