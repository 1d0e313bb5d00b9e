#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ionphase/config.hpp"
#include "ionphase/errors.hpp"

using namespace ionphase;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

nlohmann::json minimal_contrast_config() {
  return nlohmann::json::parse(R"({
    "version": 1,
    "scan": "contrast",
    "model": "closed",
    "seed": 11,
    "shots": 200,
    "trap": {"omega_ax_hz": 1350000.0, "eta": 0.25},
    "drive": {"delta_s_hz": 470400.0, "delta_hz": 42000.0},
    "initial": {"type": "ground"},
    "grid": {"start_s": 0.0, "stop_s": 6.0e-5, "step_s": 1.0e-6},
    "output": {"prefix": "t"}
  })");
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("frequencies convert to rad/s exactly once") {
  ExperimentConfig cfg = parse_experiment_config(minimal_contrast_config());
  CHECK(cfg.drive.delta == kTwoPi * 42000.0);
  CHECK(cfg.drive.delta_s == kTwoPi * 470400.0);
  CHECK(cfg.trap.omega_ax == kTwoPi * 1350000.0);
  CHECK(cfg.drive.eta == 0.25);
  CHECK(std::isinf(cfg.drive.tau));
  CHECK(cfg.shots == 200);
  CHECK(cfg.grid.points().size() == 61);
}

TEST_CASE("schema violations carry the key path") {
  SUBCASE("unknown top-level key") {
    auto doc = minimal_contrast_config();
    doc["bogus"] = 1;
    CHECK_THROWS_WITH_AS(parse_experiment_config(doc),
                         doctest::Contains("$.bogus"), ConfigError);
  }
  SUBCASE("unknown nested key") {
    auto doc = minimal_contrast_config();
    doc["drive"]["chirp_hz"] = 5.0;
    CHECK_THROWS_WITH_AS(parse_experiment_config(doc),
                         doctest::Contains("$.drive.chirp_hz"), ConfigError);
  }
  SUBCASE("missing required key") {
    auto doc = minimal_contrast_config();
    doc.erase("trap");
    CHECK_THROWS_AS(parse_experiment_config(doc), ConfigError);
  }
  SUBCASE("zero shots") {
    auto doc = minimal_contrast_config();
    doc["shots"] = 0;
    CHECK_THROWS_WITH_AS(parse_experiment_config(doc),
                         doctest::Contains("$.shots"), ConfigError);
  }
  SUBCASE("eta out of range") {
    auto doc = minimal_contrast_config();
    doc["trap"]["eta"] = 1.5;
    CHECK_THROWS_AS(parse_experiment_config(doc), ConfigError);
  }
  SUBCASE("bsb scans require a carrier frequency") {
    auto doc = minimal_contrast_config();
    doc["scan"] = "bsb";
    doc.erase("grid");
    doc["displacement"] = {{"start_s", 0.0}, {"stop_s", 2e-5}, {"step_s", 2e-6}};
    doc["probe"] = {{"start_s", 3e-6}, {"stop_s", 1.2e-4}, {"step_s", 3e-6}};
    CHECK_THROWS_WITH_AS(parse_experiment_config(doc),
                         doctest::Contains("omega0_hz"), ConfigError);
  }
}

TEST_CASE("parse-emit round trip is idempotent") {
  ExperimentConfig cfg = parse_experiment_config(minimal_contrast_config());
  const std::string once = emit_config(cfg);
  ExperimentConfig cfg2 = parse_experiment_config(nlohmann::json::parse(once));
  CHECK(emit_config(cfg2) == once);
}

TEST_CASE("fit job parsing") {
  auto doc = nlohmann::json::parse(R"({
    "version": 1,
    "fit": "phonons",
    "dataset": "out/fig2.t003",
    "n_max": 10,
    "ga": {"population": 48, "generations": 120, "seed": 7, "bootstrap_resamples": 0},
    "output": {"prefix": "fit"}
  })");
  FitJob job = parse_fit_job(doc);
  CHECK(job.kind == "phonons");
  CHECK(job.ga.n_max == 10);
  CHECK(job.ga.population == 48);
  CHECK(job.ga.bootstrap_resamples == 0);

  doc["ga"]["population"] = 4;
  CHECK_THROWS_AS(parse_fit_job(doc), ConfigError);
  doc["ga"]["population"] = 48;
  doc["fit"] = "everything";
  CHECK_THROWS_AS(parse_fit_job(doc), ConfigError);
}

TEST_CASE("shipped presets parse cleanly") {
  const std::filesystem::path presets = IONPHASE_PRESETS;
  for (const char* name : {"fig1b.json", "fig1c.json", "fig2.json", "fig3.json"}) {
    ExperimentConfig cfg = load_experiment_config(presets / name);
    CHECK(cfg.version == 1);
    CHECK(cfg.trap.eta == 0.25);
    CHECK(cfg.trap.omega_ax == kTwoPi * 1.35e6);
    CHECK(cfg.shots == 200);
  }
  for (const char* name : {"fig1b_fit.json", "fig2_fit.json", "fig3_fit.json"}) {
    FitJob job = load_fit_job(presets / name);
    CHECK(job.version == 1);
  }
}

}  // TEST_SUITE
