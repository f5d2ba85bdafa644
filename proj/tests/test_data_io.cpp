#include <doctest.h>

#include <algorithm>
#include <functional>
#include <cmath>
#include <string>
#include <vector>

#include "pgev/data_io.hpp"
#include "pgev/evd.hpp"
#include "pgev/rng.hpp"
#include "test_util.hpp"

using namespace pgev;
using namespace pgev::io;
using pgev::testing::TempDir;
using pgev::testing::write_text;

namespace {

RainRecord rec(long long pixel, int year, double value, Region region) {
  RainRecord r;
  r.pixel_id = pixel;
  r.year = year;
  r.value = value;
  r.region = region;
  r.lat = 23.0;
  r.lon = 121.0;
  return r;
}

std::string message_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("data_io") {
  TEST_CASE("load_grid happy path") {
    TempDir dir("io");
    write_text(dir / "rain.csv",
               "pixel_id,lat,lon,region,year,value\n"
               "1,23.0,121.0,North,2000,10\n1,23.0,121.0,North,2001,11\n1,23.0,121.0,North,2002,12\n"
               "2,23.1,121.0,Center,2000,20\n2,23.1,121.0,Center,2001,21\n2,23.1,121.0,Center,2002,22\n");
    const Grid g = load_grid(dir / "rain.csv");
    REQUIRE(g.size() == 2);
    CHECK(g.years == std::vector<int>{2000, 2001, 2002});
    CHECK(g.pixels[0].values == std::vector<double>{10, 11, 12});
    CHECK(g.pixels[1].values == std::vector<double>{20, 21, 22});
    CHECK(g.pixels[1].region == Region::Center);
  }

  TEST_CASE("load_grid keeps the maximum of boundary duplicates") {
    TempDir dir("io");
    write_text(dir / "rain.csv",
               "pixel_id,lat,lon,region,year,value\n"
               "7,23.0,121.0,North,2001,10\n7,23.0,121.0,Center,2001,25\n"
               "7,23.0,121.0,North,2002,30\n");
    const Grid g = load_grid(dir / "rain.csv");
    REQUIRE(g.size() == 1);
    CHECK(g.pixels[0].values == std::vector<double>{25, 30});
  }

  TEST_CASE("load_grid reports the missing pixel-year") {
    TempDir dir("io");
    write_text(dir / "rain.csv",
               "pixel_id,lat,lon,region,year,value\n"
               "1,23,121,North,2000,1\n1,23,121,North,2001,1\n2,23,121,North,2000,1\n");
    const auto msg = message_of([&] { load_grid(dir / "rain.csv"); });
    CHECK(msg.find("pixel 2") != std::string::npos);
    CHECK(msg.find("2001") != std::string::npos);
  }

  TEST_CASE("load_grid rejects malformed input with row numbers") {
    TempDir dir("io");
    write_text(dir / "a.csv", "pixel_id,lat,lon,region,value\n1,23,121,North,3\n");
    CHECK(message_of([&] { load_grid(dir / "a.csv"); }).find("year") != std::string::npos);
    write_text(dir / "b.csv", "pixel_id,lat,lon,region,year,value\n1,23,121,North,2000,1\n1,23,121,North,2001,abc\n");
    CHECK(message_of([&] { load_grid(dir / "b.csv"); }).find("row 3") != std::string::npos);
    write_text(dir / "c.csv", "pixel_id,lat,lon,region,year,value\n1,23,121,West,2000,1\n");
    CHECK(message_of([&] { load_grid(dir / "c.csv"); }).find("row 2") != std::string::npos);
    write_text(dir / "d.csv",
               "pixel_id,lat,lon,region,year,value\n1,23,121,North,2000,1\n1,23,121,North,2000,2\n");
    CHECK(message_of([&] { load_grid(dir / "d.csv"); }).find("row 3") != std::string::npos);
  }

  TEST_CASE("year exclusion at load time") {
    TempDir dir("io");
    write_text(dir / "rain.csv",
               "pixel_id,lat,lon,region,year,value\n"
               "1,23,121,North,2008,1\n1,23,121,North,2009,9\n1,23,121,North,2010,2\n");
    const Grid g = load_grid(dir / "rain.csv", {2009});
    CHECK(g.years == std::vector<int>{2008, 2010});
    CHECK(g.pixels[0].values == std::vector<double>{1, 2});
  }

  TEST_CASE("dedup_boundary examples") {
    auto out = dedup_boundary({rec(1, 2001, 10, Region::North), rec(1, 2001, 25, Region::Center)});
    REQUIRE(out.size() == 1);
    CHECK(out[0].value == 25);
    CHECK(out[0].region == Region::Center);

    out = dedup_boundary({rec(3, 1999, 4, Region::East)});
    REQUIRE(out.size() == 1);
    CHECK(out[0].value == 4);
    CHECK(out[0].region == Region::East);

    out = dedup_boundary({rec(1, 2001, 25, Region::South), rec(1, 2001, 25, Region::North)});
    REQUIRE(out.size() == 1);
    CHECK(out[0].region == Region::North);
  }

  TEST_CASE("dedup_boundary is idempotent") {
    std::vector<RainRecord> records;
    CounterRng rng(3);
    for (int i = 0; i < 300; ++i) {
      records.push_back(rec(static_cast<long long>(rng.below(10)), 2000 + static_cast<int>(rng.below(5)),
                            std::floor(rng.uniform() * 5), static_cast<Region>(rng.below(4))));
    }
    const auto once = dedup_boundary(records);
    const auto twice = dedup_boundary(once);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(once[i].pixel_id == twice[i].pixel_id);
      CHECK(once[i].year == twice[i].year);
      CHECK(once[i].value == twice[i].value);
      CHECK(once[i].region == twice[i].region);
    }
  }

  TEST_CASE("write_grid and load_grid roundtrip exactly") {
    SynthSpec spec;
    spec.pixels = 12;
    spec.years = 15;
    spec.threshold_spread = 0.3;
    const auto s = synth_grid(spec, 77);
    TempDir dir("io");
    write_grid(dir / "grid.csv", s.grid);
    const Grid back = load_grid(dir / "grid.csv");
    CHECK(back.years == s.grid.years);
    REQUIRE(back.size() == s.grid.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(back.pixels[i].pixel_id == s.grid.pixels[i].pixel_id);
      CHECK(back.pixels[i].lat == s.grid.pixels[i].lat);
      CHECK(back.pixels[i].lon == s.grid.pixels[i].lon);
      CHECK(back.pixels[i].region == s.grid.pixels[i].region);
      CHECK(back.pixels[i].values == s.grid.pixels[i].values);
    }
  }

  TEST_CASE("covariate loading and smoothing contract") {
    TempDir dir("io");
    write_text(dir / "t.csv", "year,value\n2000,0.1\n2001,0.2\n");
    auto cov = load_covariate(dir / "t.csv");
    CHECK(cov.raw == std::vector<double>{0.1, 0.2});
    CHECK_THROWS_AS(cov.on_years({2000}), IngestError);
    cov.smoothed = {1.0, 2.0};
    CHECK(cov.on_years({2001}) == std::vector<double>{2.0});
    CHECK_THROWS_AS(cov.on_years({2002}), IngestError);
    write_covariate(dir / "s.csv", cov);
    const auto back = load_covariate(dir / "s.csv");
    CHECK(back.smoothed == cov.smoothed);
  }

  TEST_CASE("synth_grid: stationary truth gives identical yearly marginals") {
    SynthSpec spec;
    spec.pixels = 400;
    spec.years = 40;
    const auto s = synth_grid(spec, 9);
    for (const auto& t : s.truth) {
      CHECK(t.theta.beta1 == 0.0);
      CHECK(t.theta.alpha1 == 0.0);
    }
    // Years are exchangeable: compare the pooled first and second halves.
    std::vector<double> early, late;
    for (const auto& px : s.grid.pixels) {
      for (std::size_t t = 0; t < px.values.size(); ++t) (t < 20 ? early : late).push_back(px.values[t]);
    }
    std::sort(early.begin(), early.end());
    std::sort(late.begin(), late.end());
    double d = 0.0;
    for (double v : early) {
      const double fa = static_cast<double>(std::upper_bound(early.begin(), early.end(), v) - early.begin()) / early.size();
      const double fb = static_cast<double>(std::upper_bound(late.begin(), late.end(), v) - late.begin()) / late.size();
      d = std::max(d, std::abs(fa - fb));
    }
    const double n = static_cast<double>(early.size());
    CHECK(d < 1.63 * std::sqrt(2.0 / n));  // two-sample KS at the 1% level
  }

  TEST_CASE("synth_grid is deterministic") {
    SynthSpec spec;
    spec.pixels = 20;
    spec.years = 12;
    spec.spatial_range_km = 10.0;
    spec.boundary_fraction = 0.2;
    TempDir dir("io");
    write_rain_records(dir / "a.csv", synth_grid(spec, 5).records);
    write_rain_records(dir / "b.csv", synth_grid(spec, 5).records);
    write_rain_records(dir / "c.csv", synth_grid(spec, 6).records);
    CHECK(testing::read_text(dir / "a.csv") == testing::read_text(dir / "b.csv"));
    CHECK(testing::read_text(dir / "a.csv") != testing::read_text(dir / "c.csv"));
  }

  TEST_CASE("synth_grid boundary duplicates are removed by dedup") {
    SynthSpec spec;
    spec.pixels = 30;
    spec.years = 10;
    spec.boundary_fraction = 0.5;
    const auto s = synth_grid(spec, 21);
    CHECK(s.records.size() > 300);
    TempDir dir("io");
    write_rain_records(dir / "r.csv", s.records);
    const Grid g = load_grid(dir / "r.csv");
    REQUIRE(g.size() == s.grid.size());
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.pixels[i].values == s.grid.pixels[i].values);
  }

  TEST_CASE("synth_grid upper quantile matches the PGEV quantile") {
    SynthSpec spec;
    spec.pixels = 1000;
    spec.years = 100;
    const auto s = synth_grid(spec, 31);
    std::vector<double> all;
    for (const auto& px : s.grid.pixels) all.insert(all.end(), px.values.begin(), px.values.end());
    std::sort(all.begin(), all.end());
    const double h = 0.99 * (all.size() - 1);
    const auto k = static_cast<std::size_t>(h);
    const double emp = all[k] + (h - k) * (all[k + 1] - all[k]);
    const double truth = pgev_quantile(0.99, s.truth.front().theta.at(0.0));
    CHECK(std::abs(emp / truth - 1.0) <= 0.01);
  }

  TEST_CASE("truth table roundtrip") {
    SynthSpec spec;
    spec.pixels = 5;
    spec.years = 10;
    spec.base.alpha1 = 0.3;
    spec.base.variant = Variant::ScaleOnly;
    const auto s = synth_grid(spec, 2);
    TempDir dir("io");
    write_truth(dir / "truth.csv", s.truth);
    const auto back = load_truth(dir / "truth.csv");
    REQUIRE(back.size() == 5);
    CHECK(back[2].theta.alpha1 == 0.3);
    CHECK(back[2].theta.c == s.truth[2].theta.c);
  }

  TEST_CASE("annual maxima and daily synthesis") {
    CHECK(annual_maxima({1, 5, 2, 7, 3, 0}, 3) == std::vector<double>{5, 7});
    DailySpec spec;
    spec.pixels = 3;
    spec.years = 20;
    const auto d = synth_daily(spec, 4);
    REQUIRE(d.size() == 3);
    for (const auto& px : d) {
      CHECK(px.values.size() == 20u * 365u);
      CHECK(px.true_threshold >= spec.threshold_lo);
      CHECK(px.true_threshold <= spec.threshold_hi);
    }
  }
}
