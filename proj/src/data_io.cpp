#include "pgev/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "pgev/csv.hpp"
#include "pgev/eda.hpp"
#include "pgev/evd.hpp"
#include "pgev/normal.hpp"
#include "pgev/rng.hpp"
#include "pgev/spatial_gp.hpp"

namespace pgev::io {

std::string_view to_string(Region r) {
  switch (r) {
    case Region::North: return "North";
    case Region::Center: return "Center";
    case Region::South: return "South";
    case Region::East: return "East";
  }
  return "?";
}

std::optional<Region> parse_region(std::string_view s) {
  std::string lower(s);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (lower == "north") return Region::North;
  if (lower == "center" || lower == "centre" || lower == "central") return Region::Center;
  if (lower == "south") return Region::South;
  if (lower == "east") return Region::East;
  return std::nullopt;
}

Grid Grid::without_years(const std::vector<int>& excluded) const {
  if (excluded.empty()) return *this;
  Grid out;
  std::vector<std::size_t> keep;
  for (std::size_t t = 0; t < years.size(); ++t) {
    if (std::find(excluded.begin(), excluded.end(), years[t]) == excluded.end()) {
      keep.push_back(t);
      out.years.push_back(years[t]);
    }
  }
  out.pixels.reserve(pixels.size());
  for (const auto& px : pixels) {
    GridSeries s = px;
    s.values.clear();
    for (auto t : keep) s.values.push_back(px.values[t]);
    out.pixels.push_back(std::move(s));
  }
  return out;
}

std::vector<double> CovariateSeries::on_years(const std::vector<int>& axis) const {
  if (smoothed.size() != years.size()) {
    throw IngestError("covariate has not been smoothed");
  }
  std::vector<double> out;
  out.reserve(axis.size());
  for (int y : axis) {
    auto it = std::lower_bound(years.begin(), years.end(), y);
    if (it == years.end() || *it != y) {
      throw IngestError("covariate has no value for year " + std::to_string(y));
    }
    out.push_back(smoothed[static_cast<std::size_t>(it - years.begin())]);
  }
  return out;
}

std::vector<RainRecord> read_rain_records(const std::filesystem::path& path) {
  const auto table = csv::Table::read(path);
  const auto c_pixel = table.column("pixel_id");
  const auto c_lat = table.column("lat");
  const auto c_lon = table.column("lon");
  const auto c_region = table.column("region");
  const auto c_year = table.column("year");
  const auto c_value = table.column("value");
  std::vector<RainRecord> out;
  out.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    RainRecord rec;
    rec.line = table.line(r);
    rec.pixel_id = table.integer(r, c_pixel);
    rec.lat = table.number(r, c_lat);
    rec.lon = table.number(r, c_lon);
    auto region = parse_region(table.cell(r, c_region));
    if (!region) {
      throw IngestError(table.file() + ": row " + std::to_string(rec.line) + ": unknown region '" +
                        std::string(table.cell(r, c_region)) + "'");
    }
    rec.region = *region;
    rec.year = static_cast<int>(table.integer(r, c_year));
    rec.value = table.number(r, c_value);
    if (!std::isfinite(rec.value) || rec.value < 0.0) {
      throw IngestError(table.file() + ": row " + std::to_string(rec.line) +
                        ": value must be finite and >= 0");
    }
    if (!std::isfinite(rec.lat) || !std::isfinite(rec.lon)) {
      throw IngestError(table.file() + ": row " + std::to_string(rec.line) +
                        ": coordinates must be finite");
    }
    out.push_back(rec);
  }
  return out;
}

void write_rain_records(const std::filesystem::path& path, const std::vector<RainRecord>& records) {
  csv::Writer w(path, {"pixel_id", "lat", "lon", "region", "year", "value"});
  for (const auto& r : records) {
    w.row(r.pixel_id, r.lat, r.lon, to_string(r.region), r.year, r.value);
  }
}

std::vector<RainRecord> dedup_boundary(std::vector<RainRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const RainRecord& a, const RainRecord& b) {
    return std::tie(a.pixel_id, a.year, a.region) < std::tie(b.pixel_id, b.year, b.region);
  });
  std::vector<RainRecord> out;
  for (std::size_t i = 0; i < records.size();) {
    std::size_t j = i;
    std::size_t best = i;
    while (j < records.size() && records[j].pixel_id == records[i].pixel_id &&
           records[j].year == records[i].year) {
      if (records[j].value > records[best].value) best = j;
      ++j;
    }
    out.push_back(records[best]);
    i = j;
  }
  return out;
}

namespace {

void check_same_region_duplicates(const std::vector<RainRecord>& records) {
  std::map<std::tuple<long long, int, Region>, std::size_t> seen;
  for (const auto& r : records) {
    auto [it, inserted] = seen.emplace(std::make_tuple(r.pixel_id, r.year, r.region), r.line);
    if (!inserted) {
      throw IngestError("row " + std::to_string(r.line) + ": duplicate record for pixel " +
                        std::to_string(r.pixel_id) + " year " + std::to_string(r.year) +
                        " in region " + std::string(to_string(r.region)) + " (first at row " +
                        std::to_string(it->second) + ")");
    }
  }
}

}  // namespace

Grid assemble_grid(const std::vector<RainRecord>& records, const std::vector<int>& excluded_years) {
  std::set<int> axis;
  std::map<long long, std::map<int, const RainRecord*>> by_pixel;
  for (const auto& r : records) {
    if (std::find(excluded_years.begin(), excluded_years.end(), r.year) != excluded_years.end()) {
      continue;
    }
    axis.insert(r.year);
    auto [it, inserted] = by_pixel[r.pixel_id].emplace(r.year, &r);
    if (!inserted) {
      throw IngestError("row " + std::to_string(r.line) + ": duplicate (pixel " +
                        std::to_string(r.pixel_id) + ", year " + std::to_string(r.year) +
                        ") after deduplication");
    }
  }
  if (by_pixel.empty()) throw IngestError("no rainfall records");

  Grid grid;
  grid.years.assign(axis.begin(), axis.end());
  for (const auto& [pixel, series] : by_pixel) {
    GridSeries s;
    s.pixel_id = pixel;
    std::array<int, kRegionCount> votes{};
    for (int year : grid.years) {
      auto it = series.find(year);
      if (it == series.end()) {
        throw IngestError("pixel " + std::to_string(pixel) + " is missing year " +
                          std::to_string(year));
      }
      s.values.push_back(it->second->value);
      ++votes[static_cast<std::size_t>(it->second->region)];
    }
    const auto& first = *series.begin()->second;
    s.lat = first.lat;
    s.lon = first.lon;
    s.region = static_cast<Region>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    grid.pixels.push_back(std::move(s));
  }
  return grid;
}

Grid load_grid(const std::filesystem::path& path, const std::vector<int>& excluded_years) {
  auto records = read_rain_records(path);
  check_same_region_duplicates(records);
  return assemble_grid(dedup_boundary(std::move(records)), excluded_years);
}

void write_grid(const std::filesystem::path& path, const Grid& grid) {
  csv::Writer w(path, {"pixel_id", "lat", "lon", "region", "year", "value"});
  for (const auto& px : grid.pixels) {
    for (std::size_t t = 0; t < grid.years.size(); ++t) {
      w.row(px.pixel_id, px.lat, px.lon, to_string(px.region), grid.years[t], px.values[t]);
    }
  }
}

CovariateSeries load_covariate(const std::filesystem::path& path) {
  const auto table = csv::Table::read(path);
  const auto c_year = table.column("year");
  const std::size_t c_value = table.has_column("raw") ? table.column("raw") : table.column("value");
  const bool has_smoothed = table.has_column("smoothed");
  const std::size_t c_smooth = has_smoothed ? table.column("smoothed") : 0;
  CovariateSeries cov;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const int year = static_cast<int>(table.integer(r, c_year));
    if (!cov.years.empty() && year <= cov.years.back()) {
      throw IngestError(table.file() + ": row " + std::to_string(table.line(r)) +
                        ": years must be strictly increasing");
    }
    cov.years.push_back(year);
    cov.raw.push_back(table.number(r, c_value));
    if (has_smoothed) cov.smoothed.push_back(table.number(r, c_smooth));
  }
  if (cov.years.empty()) throw IngestError(table.file() + ": no covariate rows");
  return cov;
}

void write_covariate(const std::filesystem::path& path, const CovariateSeries& cov) {
  if (cov.smoothed.size() == cov.years.size()) {
    csv::Writer w(path, {"year", "raw", "smoothed"});
    for (std::size_t i = 0; i < cov.years.size(); ++i) w.row(cov.years[i], cov.raw[i], cov.smoothed[i]);
  } else {
    csv::Writer w(path, {"year", "value"});
    for (std::size_t i = 0; i < cov.years.size(); ++i) w.row(cov.years[i], cov.raw[i]);
  }
}

void write_truth(const std::filesystem::path& path, const std::vector<TruthRow>& truth) {
  csv::Writer w(path, {"pixel_id", "beta0", "beta1", "alpha0", "alpha1", "gamma", "c"});
  for (const auto& t : truth) {
    w.row(t.pixel_id, t.theta.beta0, t.theta.beta1, t.theta.alpha0, t.theta.alpha1, t.theta.gamma,
          t.theta.c);
  }
}

std::vector<TruthRow> load_truth(const std::filesystem::path& path) {
  const auto table = csv::Table::read(path);
  const std::size_t cols[] = {table.column("pixel_id"), table.column("beta0"),
                              table.column("beta1"),    table.column("alpha0"),
                              table.column("alpha1"),   table.column("gamma"),
                              table.column("c")};
  std::vector<TruthRow> out;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    TruthRow t;
    t.pixel_id = table.integer(r, cols[0]);
    t.theta.beta0 = table.number(r, cols[1]);
    t.theta.beta1 = table.number(r, cols[2]);
    t.theta.alpha0 = table.number(r, cols[3]);
    t.theta.alpha1 = table.number(r, cols[4]);
    t.theta.gamma = table.number(r, cols[5]);
    t.theta.c = table.number(r, cols[6]);
    t.theta.variant = Variant::Full;
    out.push_back(t);
  }
  return out;
}

SynthResult synth_grid(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.pixels < 1 || spec.years < 3) throw std::invalid_argument("synth: need >= 1 pixel and >= 3 years");
  if (!spec.truth.empty() && spec.truth.size() != static_cast<std::size_t>(spec.pixels)) {
    throw std::invalid_argument("synth: truth list size must equal the pixel count");
  }
  if (!spec.covariate_raw.empty() && spec.covariate_raw.size() != static_cast<std::size_t>(spec.years)) {
    throw std::invalid_argument("synth: covariate path length must equal the year count");
  }
  if (spec.boundary_fraction < 0.0 || spec.boundary_fraction > 1.0) {
    throw std::invalid_argument("synth: boundary_fraction must lie in [0, 1]");
  }
  const auto n = static_cast<std::size_t>(spec.pixels);
  const auto T = static_cast<std::size_t>(spec.years);

  SynthResult out;
  auto& cov = out.covariate;
  std::vector<double> year_axis(T);
  for (std::size_t t = 0; t < T; ++t) {
    cov.years.push_back(spec.first_year + static_cast<int>(t));
    year_axis[t] = static_cast<double>(cov.years.back());
  }
  if (!spec.covariate_raw.empty()) {
    cov.raw = spec.covariate_raw;
  } else {
    CounterRng rng = CounterRng::stream(seed, "synth-covariate");
    for (std::size_t t = 0; t < T; ++t) {
      const double s = static_cast<double>(t) / static_cast<double>(T - 1);
      cov.raw.push_back(spec.covariate_start + spec.covariate_rise * s * s +
                        spec.covariate_noise * rng.normal());
    }
  }
  cov.smoothed = eda::lowess(year_axis, cov.raw);

  // Pixel layout: near-square block, regions by quadrant.
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  const std::size_t rows = (n + cols - 1) / cols;
  auto& grid = out.grid;
  grid.years = cov.years;
  for (std::size_t k = 0; k < n; ++k) {
    GridSeries px;
    px.pixel_id = static_cast<long long>(k + 1);
    const std::size_t row = k / cols, col = k % cols;
    px.lat = spec.lat0 + static_cast<double>(row) * spec.spacing_deg;
    px.lon = spec.lon0 + static_cast<double>(col) * spec.spacing_deg;
    const bool north = 2 * row >= rows;
    const bool west = 2 * col < cols;
    px.region = north ? (west ? Region::North : Region::East) : (west ? Region::South : Region::Center);
    px.values.resize(T);
    grid.pixels.push_back(std::move(px));
  }

  // Per-pixel truth.
  CounterRng truth_rng = CounterRng::stream(seed, "synth-truth");
  for (std::size_t k = 0; k < n; ++k) {
    PgevThetaCov th = spec.truth.empty() ? spec.base : spec.truth[k];
    if (spec.truth.empty() && spec.threshold_spread > 0.0) {
      const double factor = std::exp(spec.threshold_spread * (2.0 * truth_rng.uniform() - 1.0));
      th.c *= factor;
      th.alpha0 += std::log(factor);
    }
    out.truth.push_back({grid.pixels[k].pixel_id, th});
  }

  // Uniform scores: independent per pixel, or a Gaussian copula per year.
  std::vector<std::vector<double>> u(n, std::vector<double>(T));
  if (spec.spatial_range_km > 0.0) {
    std::vector<double> lat(n), lon(n);
    for (std::size_t k = 0; k < n; ++k) {
      lat[k] = grid.pixels[k].lat;
      lon[k] = grid.pixels[k].lon;
    }
    const auto proj = spatial::Projection::fit(lat, lon);
    std::vector<spatial::Point> pts(n);
    for (std::size_t k = 0; k < n; ++k) pts[k] = proj.to_km(lat[k], lon[k]);
    const auto factor = spatial::cholesky_with_jitter(
        spatial::covariance_matrix(pts, {1.0, spec.spatial_nu, spec.spatial_range_km}));
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < T; ++t) {
      CounterRng rng = CounterRng::stream(seed, "synth-field", t);
      for (auto& v : z) v = rng.normal();
      const Eigen::VectorXd w = factor.lower * z;
      for (std::size_t k = 0; k < n; ++k) {
        u[k][t] = std::clamp(copula::norm_cdf(w[static_cast<Eigen::Index>(k)]), 1e-12, 1.0 - 1e-12);
      }
    }
  } else {
    for (std::size_t k = 0; k < n; ++k) {
      CounterRng rng = CounterRng::stream(seed, "synth-values", k);
      for (std::size_t t = 0; t < T; ++t) u[k][t] = rng.uniform();
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    const auto& th = out.truth[k].theta;
    for (std::size_t t = 0; t < T; ++t) {
      // Negative draws are only possible far below the threshold; rainfall is >= 0.
      grid.pixels[k].values[t] = std::max(0.0, pgev_quantile(u[k][t], th.at(cov.smoothed[t])));
    }
  }

  // Raw records, with optional boundary duplicates from the next region.
  CounterRng dup_rng = CounterRng::stream(seed, "synth-boundary");
  for (std::size_t k = 0; k < n; ++k) {
    const auto& px = grid.pixels[k];
    const bool duplicated = dup_rng.uniform() < spec.boundary_fraction;
    const auto other = static_cast<Region>((static_cast<int>(px.region) + 1) % kRegionCount);
    for (std::size_t t = 0; t < T; ++t) {
      out.records.push_back({px.pixel_id, px.lat, px.lon, px.region, grid.years[t], px.values[t], 0});
      if (duplicated) {
        const double lower = px.values[t] * (0.5 + 0.5 * dup_rng.uniform());
        out.records.push_back({px.pixel_id, px.lat, px.lon, other, grid.years[t], lower, 0});
      }
    }
  }
  return out;
}

std::vector<DailyPixel> synth_daily(const DailySpec& spec, std::uint64_t seed) {
  if (spec.pixels < 1 || spec.years < 1 || spec.days_per_year < 1) {
    throw std::invalid_argument("synth_daily: sizes must be positive");
  }
  if (!(spec.threshold_lo > 0.0 && spec.threshold_hi >= spec.threshold_lo)) {
    throw std::invalid_argument("synth_daily: invalid threshold range");
  }
  const double p_event = spec.rate / static_cast<double>(spec.days_per_year);
  const std::size_t days = static_cast<std::size_t>(spec.years) * static_cast<std::size_t>(spec.days_per_year);
  std::vector<DailyPixel> out;
  for (int j = 0; j < spec.pixels; ++j) {
    CounterRng rng = CounterRng::stream(seed, "synth-daily", static_cast<std::uint64_t>(j));
    DailyPixel px;
    px.pixel_id = j + 1;
    const double log_lo = std::log(spec.threshold_lo), log_hi = std::log(spec.threshold_hi);
    const double c = std::exp(log_lo + (log_hi - log_lo) * rng.uniform());
    const GpdParams gpd{spec.scale_ratio * c, spec.gamma, c};
    px.true_threshold = c;
    px.values.assign(days, 0.0);
    for (std::size_t d = 0; d < days; ++d) {
      double v = 0.0;
      if (rng.uniform() < spec.wet_fraction) {
        const double s = rng.uniform();
        v = 0.9 * c * s * s * s;
      }
      if (rng.uniform() < p_event) {
        const double e = rng.uniform();
        const double excess = std::abs(gpd.gamma) <= kShapeTolerance
                                  ? -gpd.sigma_c * std::log(e)
                                  : gpd.sigma_c * std::expm1(-gpd.gamma * std::log(e)) / gpd.gamma;
        const double peak = c + excess;
        v = std::max(v, peak);
        double tail = peak;
        for (std::size_t k = 1; k <= 2 && d + k < days; ++k) {
          tail *= 0.3 + 0.55 * rng.uniform();
          px.values[d + k] = std::max(px.values[d + k], tail);
        }
      }
      px.values[d] = std::max(px.values[d], v);
    }
    out.push_back(std::move(px));
  }
  return out;
}

std::vector<double> annual_maxima(const std::vector<double>& daily, int days_per_year) {
  if (days_per_year < 1) throw std::invalid_argument("days_per_year must be positive");
  std::vector<double> out;
  const auto block = static_cast<std::size_t>(days_per_year);
  for (std::size_t start = 0; start + block <= daily.size(); start += block) {
    out.push_back(*std::max_element(daily.begin() + static_cast<std::ptrdiff_t>(start),
                                    daily.begin() + static_cast<std::ptrdiff_t>(start + block)));
  }
  return out;
}

}  // namespace pgev::io
