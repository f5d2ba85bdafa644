#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pgev/data_io.hpp"
#include "pgev/pgev_fit.hpp"
#include "pgev/spatial_gp.hpp"

namespace pgev::pipeline {

/// Raised for bad configuration or a missing upstream artifact; the message
/// says what to fix or which stage to run.
class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PipelineConfig {
  std::filesystem::path rain_csv;
  std::filesystem::path covariate_csv;
  std::filesystem::path out_dir = "out";

  double threshold_p = 0.99;
  double lowess_span = 2.0 / 3.0;
  int lowess_iterations = 3;
  int acf_max_lag = 15;

  std::vector<double> delta_x{0.5, 1.0, 2.0, 3.0};
  double q = 0.05;
  std::optional<double> x_low;  // final smoothed covariate value when unset
  /// aic (with Stationary), aic-no-stationary, region, or a variant name.
  std::string variant = "aic";

  spatial::VariogramMethod variogram_method = spatial::VariogramMethod::WLS;
  spatial::VariogramMethod copula_method = spatial::VariogramMethod::WLS;
  int variogram_bins = 15;
  double grid_spacing_km = 1.0;
  double grid_radius_km = 5.0;

  std::size_t bootstrap_replicates = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::vector<int> exclude_years;

  int run_length = 3;
  int daily_pixels = 100;
  int daily_years = 61;

  int synth_pixels = 100;
  int synth_years = 61;
  int synth_first_year = 1960;
  double synth_range_km = 10.0;
  double synth_threshold_spread = 0.3;
  double synth_beta1 = 0.0;
  double synth_alpha1 = 0.0;
  double synth_boundary_fraction = 0.1;

  /// Flat JSON object; unknown keys are rejected. Relative paths resolve
  /// against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

// Artifact file names inside out_dir.
namespace files {
inline constexpr const char* kGrid = "grid.csv";
inline constexpr const char* kCovariate = "covariate.csv";
inline constexpr const char* kEdaAcf = "eda_acf.csv";
inline constexpr const char* kEdaFbplot = "eda_fbplot.csv";
inline constexpr const char* kEdaOutliers = "eda_outliers.csv";
inline constexpr const char* kGevFits = "gev_fits.csv";
inline constexpr const char* kFits = "fits.csv";
inline constexpr const char* kLrt = "lrt.csv";
inline constexpr const char* kAic = "aic.csv";
inline constexpr const char* kAicCounts = "aic_region_counts.csv";
inline constexpr const char* kQqCurves = "qq_curves.csv";
inline constexpr const char* kDiagnostics = "diagnostics.csv";
inline constexpr const char* kScenarios = "scenarios.csv";
inline constexpr const char* kVariogram = "variogram.csv";
inline constexpr const char* kMaternFit = "matern_fit.csv";
inline constexpr const char* kKrigeAlpha1 = "krige_alpha1.csv";
inline constexpr const char* kKrigeBeta1 = "krige_beta1.csv";
inline constexpr const char* kCopulaFields = "copula_fields.csv";
inline constexpr const char* kQqBands = "qq_bands.csv";
inline constexpr const char* kDeclusterCheck = "decluster_check.csv";
inline constexpr const char* kSynthRain = "rain.csv";
inline constexpr const char* kSynthCovariate = "temperature.csv";
inline constexpr const char* kSynthTruth = "truth.csv";
}  // namespace files

/// Per-pixel fits as written to gev_fits.csv and fits.csv.
void write_fits(const std::filesystem::path& dir, const std::vector<fit::PixelFit>& fits);
std::vector<fit::PixelFit> read_fits(const std::filesystem::path& dir);

/// Stage summary for the log and exit status.
struct StageReport {
  std::string stage;
  std::vector<std::string> outputs;
  std::size_t skipped_pixels = 0;
};

StageReport run_ingest(const PipelineConfig& cfg);
StageReport run_eda(const PipelineConfig& cfg);
StageReport run_fit(const PipelineConfig& cfg);
StageReport run_select(const PipelineConfig& cfg);
StageReport run_scenarios(const PipelineConfig& cfg);
StageReport run_krige(const PipelineConfig& cfg);
StageReport run_simulate_bands(const PipelineConfig& cfg);
StageReport run_decluster_check(const PipelineConfig& cfg);
/// Writes rain.csv, temperature.csv and truth.csv into out_dir.
StageReport run_synth(const PipelineConfig& cfg);
/// ingest, eda, fit, select, scenarios, krige, simulate-bands.
std::vector<StageReport> run_all(const PipelineConfig& cfg);

}  // namespace pgev::pipeline
