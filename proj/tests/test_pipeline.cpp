#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "pgev/data_io.hpp"
#include "pgev/pgev_fit.hpp"
#include "pgev/pipeline.hpp"
#include "test_util.hpp"

using namespace pgev;
using namespace pgev::pipeline;
using pgev::testing::read_text;
using pgev::testing::TempDir;
using pgev::testing::write_text;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(PGEV_CLI_PATH) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small synthetic inputs written by the synth stage, with a config next to them.
fs::path prepare(const TempDir& dir, int pixels = 24, int years = 61) {
  PipelineConfig cfg;
  cfg.out_dir = dir / "input";
  cfg.synth_pixels = pixels;
  cfg.synth_years = years;
  cfg.seed = 11;
  run_synth(cfg);
  const fs::path config = dir / "config.json";
  write_text(config, R"({"rain_csv": "input/rain.csv", "covariate_csv": "input/temperature.csv",
    "out_dir": "out", "bootstrap_replicates": 40, "threads": 2, "seed": 3, "grid_spacing_km": 2.5})");
  return config;
}

std::string header(const fs::path& csv) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("config parsing") {
    const auto c = PipelineConfig::from_json(nlohmann::json::parse(R"({"rain_csv": "a/rain.csv", "q": 0.1,
      "exclude_years": [2009], "variogram_method": "MLE", "x_low": 0.4})"), "/data");
    CHECK(c.rain_csv == fs::path("/data/a/rain.csv"));
    CHECK(c.q == 0.1);
    CHECK(c.exclude_years == std::vector<int>{2009});
    CHECK(c.variogram_method == spatial::VariogramMethod::MLE);
    CHECK(c.x_low == 0.4);
    CHECK(c.threshold_p == 0.99);
    CHECK(c.delta_x == std::vector<double>{0.5, 1.0, 2.0, 3.0});
    CHECK(c.bootstrap_replicates == 100);
    CHECK(c.run_length == 3);

    const auto back = PipelineConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());

    CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::parse(R"({"thresold_p": 0.9})")), PipelineError);
    CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::parse(R"({"q": "high"})")), PipelineError);
    CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json::parse("[1, 2]")), PipelineError);
  }

  TEST_CASE("config validation") {
    PipelineConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = c;
    bad.threshold_p = 1.0;
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    bad = c;
    bad.bootstrap_replicates = 39;
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    bad = c;
    bad.variant = "Quadratic";
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    bad = c;
    bad.run_length = 0;
    CHECK_THROWS_AS(bad.validate(), PipelineError);
    for (const char* v : {"aic", "aic-no-stationary", "region", "ScaleOnly"}) {
      bad = c;
      bad.variant = v;
      CHECK_NOTHROW(bad.validate());
    }
  }

  TEST_CASE("config files resolve paths against their directory") {
    TempDir dir("cfg");
    fs::create_directories(dir / "sub");
    write_text(dir / "sub" / "c.json", R"({"out_dir": "results"})");
    CHECK(PipelineConfig::load(dir / "sub" / "c.json").out_dir == dir.path() / "sub" / "results");
    CHECK_THROWS_AS(PipelineConfig::load(dir / "missing.json"), PipelineError);
    write_text(dir / "broken.json", "{");
    CHECK_THROWS_AS(PipelineConfig::load(dir / "broken.json"), PipelineError);
  }

  TEST_CASE("missing artifacts name the stage to run") {
    TempDir dir("missing");
    PipelineConfig cfg;
    cfg.out_dir = dir.path();
    try {
      run_fit(cfg);
      FAIL("expected an error");
    } catch (const PipelineError& e) {
      CHECK(std::string(e.what()).find("`ingest`") != std::string::npos);
    }
    io::SynthSpec spec;
    spec.pixels = 6;
    const auto s = io::synth_grid(spec, 1);
    io::write_grid(dir / files::kGrid, s.grid);
    io::write_covariate(dir / files::kCovariate, s.covariate);
    for (auto stage : {run_select, run_scenarios, run_krige, run_simulate_bands}) {
      try {
        stage(cfg);
        FAIL("expected an error");
      } catch (const PipelineError& e) {
        CHECK(std::string(e.what()).find("`fit`") != std::string::npos);
      }
    }
  }

  TEST_CASE("ingest requires its inputs") {
    TempDir dir("ingest");
    PipelineConfig cfg;
    cfg.out_dir = dir / "out";
    CHECK_THROWS(run_ingest(cfg));
    cfg.rain_csv = dir / "nope.csv";
    cfg.covariate_csv = dir / "nope2.csv";
    CHECK_THROWS(run_ingest(cfg));
  }

  TEST_CASE("fit honours excluded years") {
    TempDir dir("exclude");
    const auto config = prepare(dir, 8);
    auto cfg = PipelineConfig::load(config);
    run_ingest(cfg);
    cfg.exclude_years = {2009};
    run_fit(cfg);
    const auto fits = read_fits(cfg.out_dir);

    const auto grid = io::load_grid(cfg.out_dir / files::kGrid);
    REQUIRE(grid.years.size() == 61);
    const auto reduced = grid.without_years({2009});
    REQUIRE(reduced.years.size() == 60);
    const auto x = io::load_covariate(cfg.out_dir / files::kCovariate).on_years(reduced.years);
    REQUIRE(fits.size() == reduced.size());
    for (std::size_t j = 0; j < fits.size(); ++j) {
      const auto direct = fit::fit_pixel(reduced.pixels[j].pixel_id, reduced.pixels[j].values, x);
      CHECK(fits[j].gev.loglik == doctest::Approx(direct.gev.loglik).epsilon(1e-12));
      CHECK(fits[j][Variant::Full].loglik == doctest::Approx(direct[Variant::Full].loglik).epsilon(1e-12));
    }
  }

  TEST_CASE("fits roundtrip through csv") {
    TempDir dir("fits");
    io::SynthSpec spec;
    spec.pixels = 5;
    const auto s = io::synth_grid(spec, 4);
    const auto fits = fit::fit_grid(s.grid, s.covariate.on_years(s.grid.years));
    write_fits(dir.path(), fits);
    const auto back = read_fits(dir.path());
    REQUIRE(back.size() == fits.size());
    for (std::size_t j = 0; j < fits.size(); ++j) {
      CHECK(back[j].pixel_id == fits[j].pixel_id);
      CHECK(back[j].threshold == fits[j].threshold);
      for (auto v : kAllVariants) {
        CHECK(back[j][v].theta.alpha1 == fits[j][v].theta.alpha1);
        CHECK(back[j][v].loglik == fits[j][v].loglik);
        CHECK(back[j][v].converged == fits[j][v].converged);
      }
    }
  }

  TEST_CASE("command line run-all is deterministic and writes headed csv files") {
    TempDir dir("cli");
    const auto config = prepare(dir);
    CHECK(run_cli("run-all --config '" + config.string() + "'", dir / "log1.txt") == 0);
    const fs::path out = dir / "out";
    fs::rename(out, dir / "first");
    CHECK(run_cli("run-all --config '" + config.string() + "'", dir / "log2.txt") == 0);
    CHECK(run_cli("decluster-check --config '" + config.string() + "'", dir / "log3.txt") == 0);

    const std::vector<std::string> expected = {
        files::kGrid, files::kCovariate, files::kEdaAcf, files::kEdaFbplot, files::kEdaOutliers,
        files::kGevFits, files::kFits, files::kLrt, files::kAic, files::kAicCounts, files::kQqCurves,
        files::kDiagnostics, files::kScenarios, files::kVariogram, files::kMaternFit, files::kKrigeAlpha1,
        files::kKrigeBeta1, files::kQqBands, files::kCopulaFields};
    for (const auto& name : expected) {
      CAPTURE(name);
      REQUIRE(fs::exists(out / name));
      CHECK(read_text(out / name) == read_text(dir / "first" / name));
      const auto h = header(out / name);
      CHECK(!h.empty());
      CHECK(h.find_first_of("0123456789") != 0);
    }
    CHECK(header(out / files::kDeclusterCheck) == "pixel_id,threshold_c,sample_Qp,true_threshold,clusters");
    CHECK(header(out / files::kQqBands) == "test,rank_frac,lo,hi,observed");
  }

  TEST_CASE("command line errors give a nonzero exit code") {
    TempDir dir("clierr");
    CHECK(run_cli("fit --out-dir '" + (dir / "empty").string() + "'", dir / "log.txt") == 1);
    CHECK(read_text(dir / "log.txt").find("ingest") != std::string::npos);
    CHECK(run_cli("", dir / "log2.txt") != 0);
    CHECK(run_cli("fit --variant Quadratic --out-dir '" + dir.path().string() + "'", dir / "log3.txt") == 1);
  }

  TEST_CASE("command line fit with excluded years") {
    TempDir dir("cliexcl");
    const auto config = prepare(dir, 6);
    REQUIRE(run_cli("ingest --config '" + config.string() + "'", dir / "a.txt") == 0);
    REQUIRE(run_cli("fit --exclude-years 2009 --config '" + config.string() + "'", dir / "b.txt") == 0);
    const auto fits = read_fits(dir / "out");
    const auto grid = io::load_grid(dir / "out" / files::kGrid, {2009});
    CHECK(grid.years.size() == 60);
    const auto x = io::load_covariate(dir / "out" / files::kCovariate).on_years(grid.years);
    const auto direct = fit::fit_pixel(grid.pixels[0].pixel_id, grid.pixels[0].values, x);
    CHECK(fits[0].gev.loglik == doctest::Approx(direct.gev.loglik).epsilon(1e-12));
  }
}
