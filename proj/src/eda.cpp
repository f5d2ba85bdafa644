#include "pgev/eda.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pgev::eda {
namespace {

// Weighted local linear fit at xs over the neighbourhood [nleft, nright]
// (extended to the right over ties). Returns false if all weights vanish.
bool local_fit(std::span<const double> x, std::span<const double> y, double xs, std::size_t nleft,
               std::size_t nright, std::span<const double> robustness, std::vector<double>& w,
               double& ys) {
  const std::size_t n = x.size();
  const double range = x[n - 1] - x[0];
  const double h = std::max(xs - x[nleft], x[nright] - xs);
  const double h9 = 0.999 * h;
  const double h1 = 0.001 * h;

  double total = 0.0;
  std::size_t j = nleft;
  for (; j < n; ++j) {
    w[j] = 0.0;
    const double r = std::abs(x[j] - xs);
    if (r <= h9) {
      if (r <= h1) {
        w[j] = 1.0;
      } else {
        const double q = r / h;
        const double t = 1.0 - q * q * q;
        w[j] = t * t * t;
      }
      w[j] *= robustness[j];
      total += w[j];
    } else if (x[j] > xs) {
      break;
    }
  }
  const std::size_t nrt = j;  // one past the last point used
  if (total <= 0.0) return false;
  for (j = nleft; j < nrt; ++j) w[j] /= total;
  if (h > 0.0) {
    double a = 0.0;
    for (j = nleft; j < nrt; ++j) a += w[j] * x[j];
    double b = xs - a;
    double c = 0.0;
    for (j = nleft; j < nrt; ++j) c += w[j] * (x[j] - a) * (x[j] - a);
    if (std::sqrt(c) > 0.001 * range) {
      b /= c;
      for (j = nleft; j < nrt; ++j) w[j] *= b * (x[j] - a) + 1.0;
    }
  }
  ys = 0.0;
  for (j = nleft; j < nrt; ++j) ys += w[j] * y[j];
  return true;
}

double median_of(std::vector<double> v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  const double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m));
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<double> lowess(std::span<const double> x_in, std::span<const double> y_in, double span,
                           int iterations) {
  const std::size_t n = x_in.size();
  if (y_in.size() != n) throw std::invalid_argument("lowess: x and y lengths differ");
  if (n < 3) throw std::invalid_argument("lowess: need at least 3 points");
  if (!(span > 0.0 && span <= 1.0)) throw std::invalid_argument("lowess: span must lie in (0, 1]");
  if (iterations < 0) throw std::invalid_argument("lowess: iterations must be >= 0");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x_in[a] < x_in[b]; });
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = x_in[order[i]];
    y[i] = y_in[order[i]];
  }
  if (x.front() == x.back()) throw std::invalid_argument("lowess: all x values are equal");

  const auto ns = std::max<std::size_t>(
      2, std::min(n, static_cast<std::size_t>(span * static_cast<double>(n) + 1e-7)));
  std::vector<double> fit(n), robustness(n, 1.0), weights(n), residuals(n);

  for (int iter = 0; iter <= iterations; ++iter) {
    std::size_t nleft = 0, nright = ns - 1;
    for (std::size_t i = 0; i < n; ++i) {
      while (nright < n - 1 && x[i] - x[nleft] > x[nright + 1] - x[i]) {
        ++nleft;
        ++nright;
      }
      if (!local_fit(x, y, x[i], nleft, nright, robustness, weights, fit[i])) fit[i] = y[i];
    }
    if (iter == iterations) break;

    double mean_abs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      residuals[i] = std::abs(y[i] - fit[i]);
      mean_abs += residuals[i];
    }
    mean_abs /= static_cast<double>(n);
    const double cmad = 6.0 * median_of(residuals);
    if (cmad < 1e-7 * mean_abs || cmad == 0.0) break;
    const double c9 = 0.999 * cmad, c1 = 0.001 * cmad;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = residuals[i];
      if (r <= c1) {
        robustness[i] = 1.0;
      } else if (r > c9) {
        robustness[i] = 0.0;
      } else {
        const double q = r / cmad;
        robustness[i] = (1.0 - q * q) * (1.0 - q * q);
      }
    }
  }

  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[order[i]] = fit[i];
  return out;
}

Acf sample_acf(std::span<const double> z, std::size_t max_lag) {
  const std::size_t T = z.size();
  if (T <= max_lag) throw std::invalid_argument("sample_acf: series length must exceed max_lag");
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / static_cast<double>(T);
  double c0 = 0.0;
  for (double v : z) c0 += (v - mean) * (v - mean);
  if (!(c0 > 0.0)) throw std::invalid_argument("sample_acf: zero-variance series");
  Acf acf;
  acf.values.resize(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) {
    double ck = 0.0;
    for (std::size_t t = 0; t + k < T; ++t) ck += (z[t] - mean) * (z[t + k] - mean);
    acf.values[k] = ck / c0;
  }
  acf.band = 1.96 / std::sqrt(static_cast<double>(T));
  return acf;
}

std::vector<double> modified_band_depth(const std::vector<std::vector<double>>& curves) {
  const std::size_t n = curves.size();
  if (n < 2) throw std::invalid_argument("modified_band_depth: need at least 2 curves");
  const std::size_t T = curves.front().size();
  for (const auto& c : curves) {
    if (c.size() != T) throw std::invalid_argument("modified_band_depth: curves differ in length");
  }
  if (T == 0) throw std::invalid_argument("modified_band_depth: empty curves");
  auto pairs = [](double k) { return k * (k - 1.0) / 2.0; };
  const double total_pairs = pairs(static_cast<double>(n));

  std::vector<double> depth(n, 0.0);
  std::vector<double> column(n);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n; ++i) column[i] = curves[i][t];
    std::sort(column.begin(), column.end());
    for (std::size_t i = 0; i < n; ++i) {
      const double v = curves[i][t];
      const auto below = static_cast<double>(std::lower_bound(column.begin(), column.end(), v) - column.begin());
      const auto above = static_cast<double>(column.end() - std::upper_bound(column.begin(), column.end(), v));
      depth[i] += total_pairs - pairs(below) - pairs(above);
    }
  }
  for (auto& d : depth) d /= total_pairs * static_cast<double>(T);
  return depth;
}

FunctionalBoxplot functional_boxplot(const std::vector<std::vector<double>>& curves,
                                     const std::vector<long long>& ids) {
  const std::size_t n = curves.size();
  if (n < 3) throw std::invalid_argument("functional_boxplot: need at least 3 curves");
  if (ids.size() != n) throw std::invalid_argument("functional_boxplot: one id per curve required");
  FunctionalBoxplot fb;
  fb.depth = modified_band_depth(curves);
  const std::size_t T = curves.front().size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return fb.depth[a] > fb.depth[b]; });
  fb.median_index = order.front();
  fb.median_id = ids[fb.median_index];
  fb.median = curves[fb.median_index];

  const std::size_t central = (n + 1) / 2;
  fb.band_lo.assign(T, INFINITY);
  fb.band_hi.assign(T, -INFINITY);
  for (std::size_t k = 0; k < central; ++k) {
    const auto& c = curves[order[k]];
    for (std::size_t t = 0; t < T; ++t) {
      fb.band_lo[t] = std::min(fb.band_lo[t], c[t]);
      fb.band_hi[t] = std::max(fb.band_hi[t], c[t]);
    }
  }
  fb.fence_lo.resize(T);
  fb.fence_hi.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double height = fb.band_hi[t] - fb.band_lo[t];
    fb.fence_lo[t] = fb.band_lo[t] - 1.5 * height;
    fb.fence_hi[t] = fb.band_hi[t] + 1.5 * height;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < T; ++t) {
      if (curves[i][t] < fb.fence_lo[t] || curves[i][t] > fb.fence_hi[t]) {
        fb.outlier_ids.push_back(ids[i]);
        break;
      }
    }
  }
  return fb;
}

}  // namespace pgev::eda
