#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pgev/theta.hpp"

namespace pgev::io {

/// Source region of a rainfall record. Declaration order is the dedup
/// tie-break order.
enum class Region { North = 0, Center = 1, South = 2, East = 3 };

inline constexpr std::size_t kRegionCount = 4;

std::string_view to_string(Region r);
std::optional<Region> parse_region(std::string_view s);

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One row of a rainfall CSV: pixel_id,lat,lon,region,year,value.
struct RainRecord {
  long long pixel_id = 0;
  double lat = 0.0;
  double lon = 0.0;
  Region region = Region::North;
  int year = 0;
  double value = 0.0;
  std::size_t line = 0;  // source line, 0 when synthesized
};

/// Annual-maximum series of one pixel on the grid's shared year axis.
struct GridSeries {
  long long pixel_id = 0;
  double lat = 0.0;
  double lon = 0.0;
  Region region = Region::North;
  std::vector<double> values;
};

struct Grid {
  std::vector<int> years;  // strictly increasing, shared by all pixels
  std::vector<GridSeries> pixels;

  std::size_t size() const { return pixels.size(); }
  /// Drops the listed years from the axis and every series.
  Grid without_years(const std::vector<int>& excluded) const;
};

struct CovariateSeries {
  std::vector<int> years;
  std::vector<double> raw;
  std::vector<double> smoothed;  // empty until smoothed

  /// Smoothed values on the given year axis; throws if a year is missing or
  /// the series has not been smoothed.
  std::vector<double> on_years(const std::vector<int>& axis) const;
};

std::vector<RainRecord> read_rain_records(const std::filesystem::path& path);
void write_rain_records(const std::filesystem::path& path, const std::vector<RainRecord>& records);

/// Per (pixel, year) keeps the maximum value and that record's region; ties
/// keep the first region in North, Center, South, East order. Output is
/// sorted by (pixel, year).
std::vector<RainRecord> dedup_boundary(std::vector<RainRecord> records);

/// Builds the grid from deduplicated records. A pixel's region is the label
/// carried by most of its retained records (ties by region order).
Grid assemble_grid(const std::vector<RainRecord>& records,
                   const std::vector<int>& excluded_years = {});

Grid load_grid(const std::filesystem::path& path, const std::vector<int>& excluded_years = {});
void write_grid(const std::filesystem::path& path, const Grid& grid);

/// Reads year,value (raw) and, when present, a `smoothed` column.
CovariateSeries load_covariate(const std::filesystem::path& path);
void write_covariate(const std::filesystem::path& path, const CovariateSeries& cov);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
  int pixels = 100;
  int first_year = 1960;
  int years = 61;
  double lat0 = 22.0;
  double lon0 = 120.0;
  double spacing_deg = 0.045;  // about 5 km

  /// Template truth for every pixel; thresholds and log-scale intercepts are
  /// varied across pixels by `threshold_spread`.
  PgevThetaCov base{std::log(3.6525), 0.0, std::log(10.0), 0.0, 0.1, 50.0, Variant::Stationary};
  double threshold_spread = 0.0;
  /// Explicit per-pixel truth, overrides `base` when non-empty.
  std::vector<PgevThetaCov> truth;

  /// Raw covariate path; generated (accelerating warming curve plus noise)
  /// when empty. It is Lowess-smoothed before driving the generator.
  std::vector<double> covariate_raw;
  double covariate_noise = 0.1;
  double covariate_start = -0.3;
  double covariate_rise = 1.5;

  /// Gaussian-copula spatial dependence across pixels (Matern, unit sill)
  /// when > 0; pixels are independent otherwise.
  double spatial_range_km = 0.0;
  double spatial_nu = 0.5;

  /// Fraction of pixels also reported by a neighbouring region with a
  /// smaller value, to exercise boundary deduplication.
  double boundary_fraction = 0.0;
};

struct TruthRow {
  long long pixel_id = 0;
  PgevThetaCov theta;
};

struct SynthResult {
  std::vector<RainRecord> records;  // includes boundary duplicates
  Grid grid;                        // deduplicated
  CovariateSeries covariate;
  std::vector<TruthRow> truth;
};

SynthResult synth_grid(const SynthSpec& spec, std::uint64_t seed);

void write_truth(const std::filesystem::path& path, const std::vector<TruthRow>& truth);
std::vector<TruthRow> load_truth(const std::filesystem::path& path);

/// Daily series following the peaks-over-threshold model: Poisson exceedance
/// days with GPD magnitudes above c, short decaying aftermath days that may
/// re-exceed, and sub-threshold wet-day noise.
struct DailySpec {
  int pixels = 100;
  int years = 61;
  int days_per_year = 365;
  double rate = 3.6525;        // exceedance events per year
  double threshold_lo = 40.0;  // true thresholds spread log-uniformly
  double threshold_hi = 250.0;
  double scale_ratio = 0.3;    // sigma_c / c
  double gamma = 0.1;
  double wet_fraction = 0.35;
};

struct DailyPixel {
  long long pixel_id = 0;
  double true_threshold = 0.0;
  std::vector<double> values;  // years * days_per_year
};

std::vector<DailyPixel> synth_daily(const DailySpec& spec, std::uint64_t seed);

/// Annual maxima of a daily series split into consecutive blocks.
std::vector<double> annual_maxima(const std::vector<double>& daily, int days_per_year);

}  // namespace pgev::io
