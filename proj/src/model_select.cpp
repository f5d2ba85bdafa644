#include "pgev/model_select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pgev::model {
namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxTerms = 10000;

// Series for the lower regularized gamma P(a, x), valid for x < a + 1.
double lower_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxTerms; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz), valid for x >= a + 1.
double upper_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxTerms; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw std::domain_error("regularized_gamma_q: need a > 0, x >= 0");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - lower_series(a, x);
  return upper_fraction(a, x);
}

double chisq_sf(double x, int df) {
  if (df < 1) throw std::domain_error("chisq_sf: df must be >= 1");
  if (!(x >= 0.0)) throw std::domain_error("chisq_sf: statistic must be >= 0");
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

std::string_view to_string(LrtTest t) {
  switch (t) {
    case LrtTest::T1_lambda: return "T1_lambda";
    case LrtTest::T2_sigma: return "T2_sigma";
    case LrtTest::T3_both: return "T3_both";
    case LrtTest::Ta_full_vs_lambda: return "Ta_full_vs_lambda";
    case LrtTest::Tb_full_vs_sigma: return "Tb_full_vs_sigma";
  }
  return "?";
}

std::optional<LrtTest> parse_test(std::string_view s) {
  for (auto t : kAllTests) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

LrtDesign design(LrtTest t) {
  switch (t) {
    case LrtTest::T1_lambda: return {Variant::Stationary, Variant::RateOnly, 1};
    case LrtTest::T2_sigma: return {Variant::Stationary, Variant::ScaleOnly, 1};
    case LrtTest::T3_both: return {Variant::Stationary, Variant::Full, 2};
    case LrtTest::Ta_full_vs_lambda: return {Variant::RateOnly, Variant::Full, 1};
    case LrtTest::Tb_full_vs_sigma: return {Variant::ScaleOnly, Variant::Full, 1};
  }
  throw std::logic_error("unknown test");
}

double lrt_statistic(double loglik_restricted, double loglik_full) {
  const double stat = -2.0 * (loglik_restricted - loglik_full);
  if (stat < -1e-6 || std::isnan(stat)) {
    throw std::domain_error("likelihood ratio statistic is negative: the restricted fit exceeds the larger model");
  }
  return std::max(stat, 0.0);
}

LrtRun run_lrts(const std::vector<fit::PixelFit>& fits) {
  LrtRun run;
  for (const auto& px : fits) {
    if (!px.all_converged()) {
      run.excluded.push_back({px.pixel_id, px.skip_reason.empty() ? "non-convergent fit" : px.skip_reason});
      continue;
    }
    std::vector<LrtResult> rows;
    try {
      for (auto t : kAllTests) {
        const auto d = design(t);
        LrtResult r;
        r.pixel_id = px.pixel_id;
        r.test = t;
        r.df = d.df;
        r.statistic = lrt_statistic(px[d.restricted].loglik, px[d.full].loglik);
        r.p_value = chisq_sf(r.statistic, d.df);
        rows.push_back(r);
      }
    } catch (const std::domain_error& e) {
      run.excluded.push_back({px.pixel_id, e.what()});
      continue;
    }
    run.results.insert(run.results.end(), rows.begin(), rows.end());
  }
  return run;
}

std::vector<double> pvalues(const LrtRun& run, LrtTest test) {
  std::vector<double> out;
  for (const auto& r : run.results) {
    if (r.test == test) out.push_back(r.p_value);
  }
  return out;
}

double aic(double loglik, int k) { return -2.0 * loglik + 2.0 * k; }

Variant select_by_aic(const std::array<double, 4>& aics, bool include_stationary) {
  // kAllVariants is already in tie-break order.
  std::optional<Variant> best;
  for (auto v : kAllVariants) {
    if (!include_stationary && v == Variant::Stationary) continue;
    const double a = aics[static_cast<std::size_t>(v)];
    if (!best || a < aics[static_cast<std::size_t>(*best)]) best = v;
  }
  return *best;
}

Variant select_by_aic(const fit::PixelFit& fit, bool include_stationary) {
  std::array<double, 4> aics{};
  for (auto v : kAllVariants) aics[static_cast<std::size_t>(v)] = aic(fit[v].loglik, parameter_count(v));
  return select_by_aic(aics, include_stationary);
}

AicTable aic_region_tables(const std::vector<fit::PixelFit>& fits,
                           const std::vector<io::Region>& regions) {
  if (regions.size() != fits.size()) throw std::invalid_argument("aic_region_tables: one region per fit");
  AicTable table;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& px = fits[i];
    if (!px.all_converged()) continue;
    AicRow row;
    row.pixel_id = px.pixel_id;
    row.region = regions[i];
    for (auto v : kAllVariants) row.aic[static_cast<std::size_t>(v)] = aic(px[v].loglik, parameter_count(v));
    row.best_with_stationary = select_by_aic(row.aic, true);
    row.best_without_stationary = select_by_aic(row.aic, false);
    const auto r = static_cast<std::size_t>(row.region);
    ++table.with_stationary[r][static_cast<std::size_t>(row.best_with_stationary)];
    ++table.without_stationary[r][static_cast<std::size_t>(row.best_without_stationary)];
    table.rows.push_back(row);
  }
  return table;
}

std::vector<QqPoint> pvalue_qq_curve(std::vector<double> p) {
  if (p.empty()) throw std::invalid_argument("pvalue_qq_curve: no p-values");
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  std::vector<QqPoint> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = {static_cast<double>(i + 1) / n, p[i]};
  return out;
}

}  // namespace pgev::model
