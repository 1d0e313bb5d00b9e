#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "ionphase/config.hpp"
#include "ionphase/errors.hpp"
#include "ionphase/parallel.hpp"
#include "ionphase/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitFit = 3;
constexpr int kExitIo = 4;

struct CommonArgs {
  std::string config;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_seed) {
  cmd->add_option("--config", args.config, "Path to the JSON configuration")->required();
  cmd->add_option("--out", args.out_dir, "Output directory (default: current)");
  cmd->add_option("--threads", args.threads, "Worker threads (default: IONPHASE_THREADS or all cores)");
  if (with_seed)
    cmd->add_option("--seed", args.seed, "Override the configured random seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trapped-ion spin-dependent light-force simulator and reconstruction toolkit"};
  app.require_subcommand(1);

  CommonArgs sim_args, rec_args;
  double dt_override = 0.0;

  CLI::App* sim = app.add_subcommand("simulate", "Synthesize measurement records from a config");
  add_common(sim, sim_args, true);

  CLI::App* rec = app.add_subcommand("reconstruct", "Fit a dataset according to a fit config");
  add_common(rec, rec_args, true);

  CLI::App* self = app.add_subcommand("selftest", "Run the built-in verification suites");
  self->add_option("--dt-override", dt_override,
                   "Force this integrator step (s) in the step-convergence suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (sim->parsed()) {
      ionphase::ExperimentConfig cfg = ionphase::load_experiment_config(sim_args.config);
      if (sim_args.seed_set) cfg.seed = sim_args.seed;
      const int threads = ionphase::resolve_threads(sim_args.threads);
      const auto result = ionphase::run_simulate(cfg, sim_args.out_dir, threads);
      for (const auto& f : result.files) std::cout << f.string() << "\n";
      return kExitOk;
    }
    if (rec->parsed()) {
      ionphase::FitJob job = ionphase::load_fit_job(rec_args.config);
      if (rec_args.seed_set) job.ga.seed = rec_args.seed;
      const int threads = ionphase::resolve_threads(rec_args.threads);
      const auto result = ionphase::run_reconstruct(job, rec_args.out_dir, threads);
      for (const auto& f : result.files) std::cout << f.string() << "\n";
      if (!result.converged) {
        std::cerr << "ionphase: fit did not converge (see diagnostics in the fit output)\n";
        return kExitFit;
      }
      return kExitOk;
    }
    if (self->parsed()) {
      const int failures = ionphase::run_selftest(std::cout, dt_override);
      return failures == 0 ? kExitOk : 1;
    }
  } catch (const ionphase::ConfigError& e) {
    std::cerr << "ionphase: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ionphase::NonConvergenceError& e) {
    std::cerr << "ionphase: " << e.what() << "\n";
    return kExitFit;
  } catch (const ionphase::UnidentifiableError& e) {
    std::cerr << "ionphase: " << e.what() << "\n";
    return kExitFit;
  } catch (const ionphase::DegenerateDataError& e) {
    std::cerr << "ionphase: " << e.what() << "\n";
    return kExitFit;
  } catch (const ionphase::IoError& e) {
    std::cerr << "ionphase: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "ionphase: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "ionphase: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
