#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "ionphase/peaks.hpp"
#include "ionphase/record.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBin = IONPHASE_BIN;
const fs::path kPresets = IONPHASE_PRESETS;

int run(const std::string& args) {
  const std::string cmd = kBin + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ionphase_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("simulate fig1b: revivals near 24 and 48 us, byte-stable reruns") {
  const fs::path out1 = fresh_dir("fig1b_a");
  const fs::path out2 = fresh_dir("fig1b_b");
  const std::string cfg = (kPresets / "fig1b.json").string();
  REQUIRE(run("simulate --config " + cfg + " --out " + out1.string()) == 0);
  REQUIRE(run("simulate --config " + cfg + " --out " + out2.string()) == 0);

  for (const char* f : {"fig1b.csv", "fig1b.meta.json", "fig1b.truth.csv"}) {
    CHECK(fs::exists(out1 / f));
    CHECK(slurp(out1 / f) == slurp(out2 / f));
  }

  // revival structure in the noiseless truth curve
  std::ifstream truth(out1 / "fig1b.truth.csv");
  std::string line;
  std::getline(truth, line);  // header
  std::vector<double> t, c;
  while (std::getline(truth, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    t.push_back(std::stod(line.substr(0, c1)));
    c.push_back(std::stod(line.substr(c2 + 1)));
  }
  Eigen::VectorXd cv = Eigen::Map<Eigen::VectorXd>(c.data(), c.size());
  const auto peaks = ionphase::find_peaks(cv, 0.5);
  REQUIRE(peaks.size() == 2);
  CHECK(t[peaks[0].index] * 1e6 == doctest::Approx(23.8).epsilon(0.03));
  CHECK(t[peaks[1].index] * 1e6 == doctest::Approx(47.6).epsilon(0.03));

  // a different seed produces different draws
  const fs::path out3 = fresh_dir("fig1b_c");
  REQUIRE(run("simulate --config " + cfg + " --seed 999 --out " + out3.string()) == 0);
  CHECK(slurp(out1 / "fig1b.csv") != slurp(out3 / "fig1b.csv"));
  CHECK(slurp(out1 / "fig1b.truth.csv") == slurp(out3 / "fig1b.truth.csv"));

  fs::remove_all(out1);
  fs::remove_all(out2);
  fs::remove_all(out3);
}

TEST_CASE("config errors exit with code 2") {
  CHECK(run("simulate --config /nonexistent.json") == 2);

  const fs::path dir = fresh_dir("badcfg");
  spit(dir / "broken.json", "{ not json");
  CHECK(run("simulate --config " + (dir / "broken.json").string()) == 2);

  std::string cfg = slurp(kPresets / "fig1b.json");
  const auto pos = cfg.find("\"shots\": 200");
  REQUIRE(pos != std::string::npos);
  cfg.replace(pos, 12, "\"shots\": 0");
  spit(dir / "zeroshots.json", cfg);
  CHECK(run("simulate --config " + (dir / "zeroshots.json").string()) == 2);

  CHECK(run("simulate") == 2);  // missing --config
  fs::remove_all(dir);
}

TEST_CASE("reconstruct round trip on a small sideband dataset") {
  const fs::path dir = fresh_dir("roundtrip");
  spit(dir / "sim.json", R"({
    "version": 1,
    "scan": "bsb",
    "model": "closed",
    "seed": 5,
    "shots": 200,
    "trap": {"omega_ax_hz": 1350000.0, "eta": 0.25},
    "drive": {"delta_s_hz": 396000.0, "delta_hz": 33000.0},
    "sequence": {"omega0_hz": 100000.0, "tau_s": 4.0e-4},
    "initial": {"type": "ground"},
    "displacement": {"start_s": 8.0e-6, "stop_s": 8.5e-6, "step_s": 1.0e-6},
    "probe": {"start_s": 3.0e-6, "stop_s": 1.2e-4, "step_s": 3.0e-6},
    "output": {"prefix": "mini"}
  })");
  REQUIRE(run("simulate --config " + (dir / "sim.json").string() + " --out " + dir.string()) == 0);
  REQUIRE(fs::exists(dir / "mini.t000.csv"));

  spit(dir / "fit.json", std::string(R"({
    "version": 1,
    "fit": "phonons",
    "dataset": ")") + (dir / "mini.t000").string() + R"(",
    "n_max": 8,
    "ga": {"population": 48, "generations": 120, "seed": 9, "bootstrap_resamples": 0},
    "output": {"prefix": "mini"}
  })");
  REQUIRE(run("reconstruct --config " + (dir / "fit.json").string() + " --threads 2 --out " +
              dir.string()) == 0);
  CHECK(fs::exists(dir / "mini.fit.json"));
  CHECK(fs::exists(dir / "mini.curve.csv"));

  const auto fit = nlohmann::json::parse(slurp(dir / "mini.fit.json"));
  CHECK(fit.at("fit").at("converged").get<bool>());
  // displacement pulse of 8 us at these parameters leaves |alpha| ~ 0.9
  const double alpha = fit.at("coherent_fit").at("params").at("alpha_mag").get<double>();
  CHECK(alpha > 0.4);
  CHECK(alpha < 1.5);
  fs::remove_all(dir);
}

TEST_CASE("fig2 preset round trip traces the closed-form displacement") {
  const fs::path dir = fresh_dir("fig2");
  REQUIRE(run("simulate --config " + (kPresets / "fig2.json").string() + " --out " +
              dir.string()) == 0);

  // reduced-budget fit spec over the shipped dataset
  spit(dir / "fit.json", std::string(R"({
    "version": 1,
    "fit": "bsb_series",
    "index": ")") + (dir / "fig2.index.json").string() + R"(",
    "n_max": 10,
    "ga": {"population": 48, "generations": 120, "seed": 2, "bootstrap_resamples": 0},
    "output": {"prefix": "fig2"}
  })");
  REQUIRE(run("reconstruct --config " + (dir / "fit.json").string() + " --threads 2 --out " +
              dir.string()) == 0);
  REQUIRE(fs::exists(dir / "fig2.alpha_series.csv"));

  // the recovered |alpha(t)| series follows the generating closed form
  constexpr double kTwoPi = 6.283185307179586;
  const double eta = 0.25, delta = kTwoPi * 33000.0, delta_s = kTwoPi * 396000.0;
  std::ifstream in(dir / "fig2.alpha_series.csv");
  std::string line;
  std::getline(in, line);
  int n = 0;
  double worst = 0.0;
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double t = std::stod(line.substr(0, c1));
    const double amag = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    const double expected =
        eta * delta_s / (2.0 * delta) * std::abs(std::sin(delta * t / 2.0));
    worst = std::max(worst, std::abs(amag - expected));
    ++n;
  }
  CHECK(n == 18);
  CHECK(worst <= 0.15);
  fs::remove_all(dir);
}

TEST_CASE("fig3 preset round trip recovers the detuning and an effective detuning") {
  const fs::path dir = fresh_dir("fig3");
  REQUIRE(run("simulate --config " + (kPresets / "fig3.json").string() + " --out " +
              dir.string()) == 0);
  spit(dir / "fit.json", std::string(R"({
    "version": 1,
    "fit": "homodyne_series",
    "index": ")") + (dir / "fig3.index.json").string() + R"(",
    "output": {"prefix": "fig3"}
  })");
  REQUIRE(run("reconstruct --config " + (dir / "fit.json").string() + " --threads 2 --out " +
              dir.string()) == 0);
  REQUIRE(fs::exists(dir / "fig3.trajectory.csv"));
  REQUIRE(fs::exists(dir / "fig3.detuning.json"));
  REQUIRE(fs::exists(dir / "fig3.trajectory_fit.json"));

  constexpr double kTwoPi = 6.283185307179586;
  const auto det = nlohmann::json::parse(slurp(dir / "fig3.detuning.json"));
  const double delta_fit = det.at("params").at("delta").get<double>();
  CHECK(std::abs(delta_fit - kTwoPi * 5237.0) <= kTwoPi * 150.0);

  const auto traj = nlohmann::json::parse(slurp(dir / "fig3.trajectory_fit.json"));
  const double delta_eff = traj.at("params").at("delta_eff").get<double>();
  CHECK(delta_eff > delta_fit);  // the trajectory closes early beyond the LD regime
  fs::remove_all(dir);
}

TEST_CASE("truncated dataset csv exits with code 4") {
  const fs::path dir = fresh_dir("truncated");
  spit(dir / "bad.csv", "control,shots,successes\n1.0e-6,200\n");
  spit(dir / "bad.meta.json", ionphase::to_json(ionphase::RecordMeta{}).dump(2));
  spit(dir / "fit.json", std::string(R"({
    "version": 1,
    "fit": "phonons",
    "dataset": ")") + (dir / "bad").string() + R"(",
    "n_max": 8,
    "output": {"prefix": "bad"}
  })");
  CHECK(run("reconstruct --config " + (dir / "fit.json").string() + " --out " + dir.string()) == 4);
  fs::remove_all(dir);
}

TEST_CASE("selftest passes on a fresh build and fails on a coarse step") {
  CHECK(run("selftest") == 0);
  CHECK(run("selftest --dt-override 2e-7") != 0);
}

}  // TEST_SUITE
