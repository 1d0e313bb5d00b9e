#include "ionphase/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ionphase/errors.hpp"
#include "ionphase/lsq.hpp"
#include "ionphase/parallel.hpp"
#include "ionphase/rng.hpp"

namespace ionphase {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kPi = 3.14159265358979323846264338328;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

// ---------------------------------------------------------------------------
// Blue-sideband likelihood
// ---------------------------------------------------------------------------

struct BsbProblem {
  Eigen::VectorXd t;        // probe times
  Eigen::VectorXd hits;     // successes
  Eigen::VectorXd shots;
  Eigen::VectorXd sqrt_n1;  // sqrt(n+1), n = 0..n_max
  double eta = 0.25;
  int k = 0;  // number of populations (n_max + 1)
};

struct BsbParams {
  Eigen::VectorXd p;
  double omega0 = 0.0;
  double a = 1.0;
  double tau = 0.0;
};

// Genome layout: [w_0..w_{k-1}, ln omega0, logit a, ln tau]; p = softmax(w).
BsbParams decode_genome(const BsbProblem& prob, const Eigen::VectorXd& g) {
  BsbParams out;
  out.p.resize(prob.k);
  const double wmax = g.head(prob.k).maxCoeff();
  double z = 0.0;
  for (int n = 0; n < prob.k; ++n) {
    out.p[n] = std::exp(g[n] - wmax);
    z += out.p[n];
  }
  out.p /= z;
  out.omega0 = std::exp(g[prob.k]);
  out.a = sigmoid(g[prob.k + 1]);
  out.tau = std::exp(g[prob.k + 2]);
  return out;
}

double bsb_model_q(const BsbProblem& prob, const BsbParams& par, double t) {
  const double damp = par.a * std::exp(-t / par.tau);
  double q = 0.0;
  for (int n = 0; n < prob.k; ++n)
    q += 0.5 * par.p[n] * (damp * std::cos(prob.eta * prob.sqrt_n1[n] * par.omega0 * t) + 1.0);
  return q;
}

double bsb_loglik(const BsbProblem& prob, const Eigen::VectorXd& genome) {
  const BsbParams par = decode_genome(prob, genome);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < prob.t.size(); ++i) {
    double q = bsb_model_q(prob, par, prob.t[i]);
    q = std::min(1.0 - 1e-9, std::max(1e-9, q));
    ll += prob.hits[i] * std::log(q) + (prob.shots[i] - prob.hits[i]) * std::log1p(-q);
  }
  return ll;
}

// Coarse periodogram of the record; the strongest line sits near one of the
// sideband frequencies eta sqrt(n+1) Omega_0.
double dominant_angular_freq(const Eigen::VectorXd& t, const Eigen::VectorXd& y) {
  const double span = t[t.size() - 1] - t[0];
  double dt_min = span;
  for (Eigen::Index i = 1; i < t.size(); ++i) dt_min = std::min(dt_min, t[i] - t[i - 1]);
  const double w_lo = kPi / (2.0 * span);
  const double w_hi = kPi / dt_min;
  const double ybar = y.mean();
  double best_w = w_lo, best_p = -1.0;
  const int grid = 600;
  for (int g = 0; g < grid; ++g) {
    const double w = w_lo * std::pow(w_hi / w_lo, double(g) / (grid - 1));
    std::complex<double> acc = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i)
      acc += (y[i] - ybar) * std::exp(std::complex<double>(0.0, -w * t[i]));
    const double p = std::norm(acc);
    if (p > best_p) {
      best_p = p;
      best_w = w;
    }
  }
  return best_w;
}

struct GaSettings {
  int population = 96;
  int generations = 400;
  double mutation_scale = 0.05;
  double crossover_rate = 0.7;
  int elite_count = 4;
  int threads = 1;
};

struct GaOutcome {
  Eigen::VectorXd best;
  double best_ll = 0.0;
  std::vector<double> history;
};

GaOutcome run_ga(const BsbProblem& prob, const GaSettings& set, SeqRng& rng,
                 const std::vector<Eigen::VectorXd>& init) {
  const int genes = prob.k + 3;
  std::vector<Eigen::VectorXd> pop = init;
  std::vector<double> fit(set.population, 0.0);
  std::vector<int> order(set.population);

  GaOutcome out;
  out.history.reserve(set.generations);

  for (int gen = 0; gen < set.generations; ++gen) {
    parallel_for(set.population, set.threads,
                 [&](int i) { fit[i] = bsb_loglik(prob, pop[i]); });
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return fit[a] != fit[b] ? fit[a] > fit[b] : a < b;
    });
    out.history.push_back(fit[order[0]]);

    if (gen + 1 == set.generations) {
      out.best = pop[order[0]];
      out.best_ll = fit[order[0]];
      break;
    }

    const double sigma = set.mutation_scale * std::pow(0.99, gen);
    std::vector<Eigen::VectorXd> next;
    next.reserve(set.population);
    for (int e = 0; e < set.elite_count; ++e) next.push_back(pop[order[e]]);

    auto tournament = [&]() -> const Eigen::VectorXd& {
      int best = rng.uniform_int(set.population);
      for (int j = 1; j < 3; ++j) {
        const int c = rng.uniform_int(set.population);
        if (fit[c] > fit[best]) best = c;
      }
      return pop[best];
    };

    while (static_cast<int>(next.size()) < set.population) {
      Eigen::VectorXd child = tournament();
      if (rng.uniform() < set.crossover_rate) {
        const Eigen::VectorXd& other = tournament();
        for (int g = 0; g < genes; ++g)
          if (rng.uniform() < 0.5) child[g] = other[g];
      }
      for (int g = 0; g < genes; ++g) child[g] += sigma * rng.gaussian();
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }
  return out;
}

// Population near one carrier-frequency scale. The per-level Rabi ladder
// Omega_0 sqrt(n+1) makes the likelihood nearly scale-degenerate, so the
// carrier gene must stay tight within one run; competing scales are compared
// across runs instead.
std::vector<Eigen::VectorXd> seeded_population(const BsbProblem& prob, const GaSettings& set,
                                               SeqRng& rng, double omega0, double tau_scale,
                                               const Eigen::VectorXd* center) {
  const int genes = prob.k + 3;
  std::vector<Eigen::VectorXd> pop;
  pop.reserve(set.population);
  for (int i = 0; i < set.population; ++i) {
    Eigen::VectorXd g(genes);
    if (center && i < set.population * 3 / 5) {
      g = *center;
      for (int j = 0; j < prob.k; ++j) g[j] += 0.3 * rng.gaussian();
      g[prob.k] += 0.02 * rng.gaussian();
      g[prob.k + 1] += 0.2 * rng.gaussian();
      g[prob.k + 2] += 0.2 * rng.gaussian();
    } else {
      for (int n = 0; n < prob.k; ++n) g[n] = rng.gaussian();
      g[prob.k] = std::log(omega0) + 0.04 * rng.gaussian();
      g[prob.k + 1] = logit(0.6 + 0.38 * rng.uniform());
      g[prob.k + 2] = std::log(tau_scale) + std::log(40.0) * (rng.uniform() - 0.3);
    }
    pop.push_back(std::move(g));
  }
  return pop;
}

void widen_ci(std::map<std::string, std::pair<double, double>>& ci,
              const std::map<std::string, double>& params) {
  for (auto& [name, bounds] : ci) {
    const auto it = params.find(name);
    if (it == params.end()) continue;
    bounds.first = std::min(bounds.first, it->second);
    bounds.second = std::max(bounds.second, it->second);
  }
}

// Restarted simplex polish: each round re-inflates the simplex at a smaller
// scale, which reliably finishes what a single Nelder-Mead run stalls on.
void polish_best(const BsbProblem& prob, Eigen::VectorXd& genome, double& ll,
                 std::initializer_list<std::pair<int, double>> rounds) {
  for (const auto& [iters, step] : rounds) {
    lsq::NmResult r = lsq::nelder_mead(
        [&](const Eigen::VectorXd& g) { return -bsb_loglik(prob, g); }, genome,
        {iters, 1e-14, step});
    if (-r.fmin >= ll) {
      ll = -r.fmin;
      genome = r.x;
    }
  }
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - lo;
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

}  // namespace

void FitResult::check_invariants() const {
  for (const auto& [name, bounds] : ci) {
    const auto it = params.find(name);
    if (it == params.end()) throw Error("FitResult: ci for unknown parameter " + name);
    if (!(bounds.first <= it->second && it->second <= bounds.second))
      throw Error("FitResult: ci does not contain the estimate for " + name);
  }
}

nlohmann::json to_json(const FitResult& fit) {
  nlohmann::json j;
  j["params"] = fit.params;
  nlohmann::json ci = nlohmann::json::object();
  for (const auto& [name, bounds] : fit.ci) ci[name] = {bounds.first, bounds.second};
  j["ci68"] = ci;
  if (fit.log_likelihood) j["log_likelihood"] = *fit.log_likelihood;
  if (fit.chi2) j["chi2"] = *fit.chi2;
  j["converged"] = fit.converged;
  j["residuals"] = std::vector<double>(fit.residuals.data(), fit.residuals.data() + fit.residuals.size());
  j["diagnostics"] = fit.diagnostics;
  if (!fit.history.empty()) j["history"] = fit.history;
  return j;
}

std::pair<PhononDistribution<>, FitResult> reconstruct_phonons(const MeasurementRecord& record,
                                                               const GAConfig& cfg,
                                                               const ReconstructHints& hints) {
  record.validate();
  cfg.validate();
  if (record.size() < 20)
    throw std::invalid_argument("reconstruct_phonons: need >= 20 time points");
  for (auto s : record.shots)
    if (s < 50) throw std::invalid_argument("reconstruct_phonons: need >= 50 shots per point");

  const std::size_t m = record.size();
  bool all_equal = true;
  for (std::size_t i = 1; i < m; ++i)
    if (record.fraction(i) != record.fraction(0)) {
      all_equal = false;
      break;
    }
  if (all_equal)
    throw DegenerateDataError("reconstruct_phonons: record is constant, no dynamics to fit");

  BsbProblem prob;
  prob.k = cfg.n_max + 1;
  prob.eta = record.meta.eta > 0.0 ? record.meta.eta : 0.25;
  prob.t.resize(m);
  prob.hits.resize(m);
  prob.shots.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    prob.t[i] = record.control[i];
    prob.hits[i] = static_cast<double>(record.successes[i]);
    prob.shots[i] = static_cast<double>(record.shots[i]);
  }
  prob.sqrt_n1.resize(prob.k);
  for (int n = 0; n < prob.k; ++n) prob.sqrt_n1[n] = std::sqrt(double(n) + 1.0);

  // Carrier-frequency candidates: the calibration hint plus the periodogram
  // line mapped down through the sideband ladder. Each candidate scale gets a
  // short profiling GA; the winner (best likelihood, hint proximity breaking
  // near-ties) seeds the configured run. Running one population across
  // scales does not work: the ladder Omega_0 sqrt(n+1) makes distinct
  // (shifted p, rescaled Omega_0) modes almost equally likely and crossover
  // blends them.
  std::vector<double> omega0_cands;
  {
    Eigen::VectorXd y(m);
    for (std::size_t i = 0; i < m; ++i) y[i] = record.fraction(i);
    const double line = dominant_angular_freq(prob.t, y);
    if (hints.omega0) omega0_cands.push_back(*hints.omega0);
    for (int n = 0; n < 6; ++n) omega0_cands.push_back(line / (prob.eta * prob.sqrt_n1[n]));
  }
  const double span = prob.t[m - 1] - prob.t[0];
  const double tau_scale = hints.tau ? std::min(*hints.tau, 1e3 * span) : 3.0 * span;

  GaSettings profile_set{std::min(48, cfg.population), 80, cfg.mutation_scale,
                         cfg.crossover_rate, std::min(4, cfg.elite_count), cfg.threads};
  std::vector<GaOutcome> profiles(omega0_cands.size());
  for (std::size_t c = 0; c < omega0_cands.size(); ++c) {
    SeqRng prng(derive_seed(cfg.seed, 0x50F1u, c));
    auto init = seeded_population(prob, profile_set, prng, omega0_cands[c], tau_scale, nullptr);
    profiles[c] = run_ga(prob, profile_set, prng, init);
    lsq::NmResult pp = lsq::nelder_mead(
        [&](const Eigen::VectorXd& g) { return -bsb_loglik(prob, g); }, profiles[c].best,
        {2000, 1e-13, 0.02});
    if (-pp.fmin > profiles[c].best_ll) {
      profiles[c].best = pp.x;
      profiles[c].best_ll = -pp.fmin;
    }
  }
  std::size_t win = 0;
  for (std::size_t c = 1; c < omega0_cands.size(); ++c)
    if (profiles[c].best_ll > profiles[win].best_ll) win = c;
  if (hints.omega0) {
    // prefer the calibrated scale on likelihood plateaus (a single-component
    // record cannot distinguish the ladder aliases at all)
    const double window = std::max(10.0, 1e-6 * std::abs(profiles[win].best_ll));
    for (std::size_t c = 0; c < omega0_cands.size(); ++c) {
      if (profiles[c].best_ll < profiles[win].best_ll - window) continue;
      const double dc = std::abs(std::log(omega0_cands[c] / *hints.omega0));
      const double dw = std::abs(std::log(omega0_cands[win] / *hints.omega0));
      if (dc < dw) win = c;
    }
  }

  GaSettings set{cfg.population, cfg.generations, cfg.mutation_scale,
                 cfg.crossover_rate, cfg.elite_count, cfg.threads};
  SeqRng rng(derive_seed(cfg.seed, 0x6E1Du));
  const double omega0_win = std::exp(profiles[win].best[prob.k]);
  auto init = seeded_population(prob, set, rng, omega0_win, tau_scale, &profiles[win].best);
  GaOutcome ga = run_ga(prob, set, rng, init);
  if (profiles[win].best_ll > ga.best_ll) {
    ga.best = profiles[win].best;
    ga.best_ll = profiles[win].best_ll;
  }

  Eigen::VectorXd genome = ga.best;
  double best_ll = ga.best_ll;
  polish_best(prob, genome, best_ll, {{6000, 0.02}, {4000, 0.004}, {3000, 0.001}});

  const BsbParams par = decode_genome(prob, genome);

  FitResult fit;
  fit.log_likelihood = best_ll;
  fit.history = ga.history;
  fit.params["omega0"] = par.omega0;
  fit.params["a"] = par.a;
  fit.params["tau"] = par.tau;
  for (int n = 0; n < prob.k; ++n) fit.params["p_" + std::to_string(n)] = par.p[n];
  fit.residuals.resize(m);
  for (std::size_t i = 0; i < m; ++i)
    fit.residuals[i] = record.fraction(i) - bsb_model_q(prob, par, prob.t[i]);

  // stability over the final fifth of the generations; drifts below half a
  // log-likelihood unit are statistically meaningless refinements
  const std::size_t tail = static_cast<std::size_t>(0.8 * ga.history.size());
  const double improvement = ga.history.back() - ga.history[tail];
  fit.converged = improvement <= std::max(0.5, 1e-6 * std::abs(best_ll));
  if (!fit.converged)
    fit.diagnostics.push_back("likelihood still improving over the final 20% of generations by " +
                              std::to_string(improvement));

  if (cfg.bootstrap_resamples > 0) {
    // parametric bootstrap around the fitted curve
    Eigen::VectorXd q_hat(m);
    for (std::size_t i = 0; i < m; ++i)
      q_hat[i] = std::min(1.0 - 1e-12, std::max(1e-12, bsb_model_q(prob, par, prob.t[i])));

    GaSettings bset = set;
    bset.generations = std::max(60, cfg.generations / 5);
    std::vector<std::map<std::string, double>> draws(cfg.bootstrap_resamples);
    parallel_for(cfg.bootstrap_resamples, cfg.threads, [&](int r) {
      const std::uint64_t rseed = derive_seed(cfg.seed, 0xB007'5742u, static_cast<std::uint64_t>(r));
      CounterRng crng{rseed};
      BsbProblem bprob = prob;
      for (std::size_t i = 0; i < m; ++i) {
        long long hits = 0;
        const long long shots = static_cast<long long>(prob.shots[i]);
        for (long long j = 0; j < shots; ++j)
          if (crng.uniform(i, static_cast<std::uint64_t>(j)) < q_hat[i]) ++hits;
        bprob.hits[i] = static_cast<double>(hits);
      }
      // cold refit at the fitted carrier scale: a warm start at the point
      // estimate shrinks the resample spread and under-covers
      SeqRng brng(derive_seed(rseed, 0x6A5Eu));
      auto binit = seeded_population(bprob, bset, brng, par.omega0, tau_scale, nullptr);
      GaOutcome bga = run_ga(bprob, bset, brng, binit);
      Eigen::VectorXd bg = bga.best;
      double bll = bga.best_ll;
      polish_best(bprob, bg, bll, {{2000, 0.02}, {1500, 0.004}, {1000, 0.001}});
      const BsbParams bpar = decode_genome(bprob, bg);
      auto& d = draws[r];
      d["omega0"] = bpar.omega0;
      d["a"] = bpar.a;
      d["tau"] = bpar.tau;
      for (int n = 0; n < prob.k; ++n) d["p_" + std::to_string(n)] = bpar.p[n];
    });

    for (const auto& [name, value] : fit.params) {
      std::vector<double> v;
      v.reserve(draws.size());
      for (const auto& d : draws) v.push_back(d.at(name));
      fit.ci[name] = {percentile(v, 0.16), percentile(v, 0.84)};
      (void)value;
    }
    widen_ci(fit.ci, fit.params);
  }

  fit.check_invariants();
  Eigen::VectorXd p = par.p;
  return {PhononDistribution<>(std::move(p)), std::move(fit)};
}

FitResult fit_coherent(const PhononDistribution<>& dist) {
  const int n_max = dist.n_max();
  auto ssr = [&](double u) {
    return (dist.p - coherent_phonon_pdf(u, n_max)).squaredNorm();
  };
  const double u_hi = std::max(2.0, 2.0 * dist.mean() + 5.0);
  double u = lsq::golden_section(ssr, 0.0, u_hi, 1e-13);
  if (ssr(0.0) <= ssr(u)) u = 0.0;
  const double best = ssr(u);

  FitResult fit;
  fit.converged = true;
  fit.chi2 = best;
  const double alpha = std::sqrt(u);
  fit.params["alpha_mag"] = alpha;
  fit.residuals = dist.p - coherent_phonon_pdf(u, n_max);

  // curvature-based 68% interval on u, propagated to |alpha|
  const double h = 1e-4 * (1.0 + u);
  const double d2 = (ssr(u + h) - 2.0 * best + ssr(std::max(0.0, u - h))) / (h * h);
  const double sigma2 = best / std::max(1, n_max);
  double se_alpha;
  if (d2 > 0.0) {
    const double se_u = std::sqrt(2.0 * sigma2 / d2);
    se_alpha = u > 1e-9 ? se_u / (2.0 * alpha) : std::sqrt(se_u);
  } else {
    se_alpha = 0.0;
  }
  fit.ci["alpha_mag"] = {std::max(0.0, alpha - se_alpha), alpha + se_alpha};

  if (best > 1e-3)
    fit.diagnostics.push_back("poor_fit: residual sum of squares " + std::to_string(best) +
                              " exceeds 1e-3; distribution is not coherent");
  fit.check_invariants();
  return fit;
}

FitResult fit_homodyne_fringe(const MeasurementRecord& record, double t,
                              const SequenceParams& seq) {
  record.validate();
  seq.validate();
  const std::size_t m = record.size();
  if (m < 6) throw std::invalid_argument("fit_homodyne_fringe: need >= 6 phase points");
  const double span = *std::max_element(record.control.begin(), record.control.end()) -
                      *std::min_element(record.control.begin(), record.control.end());
  const double mean_gap = span / static_cast<double>(m - 1);
  if (span + mean_gap < kTwoPi - 1e-9)
    throw std::invalid_argument("fit_homodyne_fringe: phase scan must cover a full period");

  Eigen::VectorXd q(m), sig(m);
  for (std::size_t i = 0; i < m; ++i) {
    q[i] = record.fraction(i);
    const double qs = (record.successes[i] + 1.0) / (record.shots[i] + 2.0);
    sig[i] = std::sqrt(qs * (1.0 - qs) / record.shots[i]);
  }
  // a record consistent with a constant carries no fringe information
  const double q_mean = q.mean();
  double chi2_const = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = (q[i] - q_mean) / sig[i];
    chi2_const += r * r;
  }
  const double dof = static_cast<double>(m) - 1.0;
  if (chi2_const < dof + 4.0 * std::sqrt(2.0 * dof))
    throw UnidentifiableError("fit_homodyne_fringe: fringe is flat within shot noise");

  SequenceParams fringe_seq = seq;
  auto model = [&](double a2, double phi0, double tau, double dphi) {
    fringe_seq.tau = std::min(1e9, std::max(1e-12, tau));
    const double am = std::sqrt(std::min(1e6, std::max(0.0, a2)));
    return homodyne_signal(t, am, dphi + phi0, fringe_seq);
  };
  auto cost = [&](double a2, double phi0, double tau) {
    double c = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = (q[i] - model(a2, phi0, tau, record.control[i])) / sig[i];
      c += r * r;
    }
    return c;
  };

  // coarse grid, then damped least squares in (ln a2, phi0, ln tau)
  const double q_min = q.minCoeff();
  const double depth = std::min(0.999999, std::max(1e-3, 1.0 - 2.0 * q_min));
  const double tau0 = t > 0.0 ? -t / std::log(depth) : 1e3;
  double best_c = std::numeric_limits<double>::infinity();
  double a2_0 = 1.0, phi0_0 = 0.0;
  for (double a2 : {0.02, 0.05, 0.12, 0.25, 0.5, 1.0, 1.8, 3.0, 5.0, 8.0}) {
    for (int g = 0; g < 36; ++g) {
      const double phi0 = -kPi + kTwoPi * g / 36.0;
      const double c = cost(a2, phi0, tau0);
      if (c < best_c) {
        best_c = c;
        a2_0 = a2;
        phi0_0 = phi0;
      }
    }
  }

  Eigen::VectorXd x0(3);
  x0 << std::log(a2_0), phi0_0, std::log(tau0);
  auto residuals = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(m);
    const double a2 = std::exp(x[0]);
    const double tau = std::exp(x[2]);
    for (std::size_t i = 0; i < m; ++i)
      r[i] = (q[i] - model(a2, x[1], tau, record.control[i])) / sig[i];
    return r;
  };
  lsq::LmResult lm = lsq::levenberg_marquardt(residuals, x0, {});

  const double a2 = std::exp(lm.x[0]);
  const double alpha = std::sqrt(a2);
  const double phi = std::remainder(lm.x[1], kTwoPi);
  const double tau = std::exp(lm.x[2]);

  FitResult fit;
  fit.converged = lm.converged;
  fit.chi2 = lm.cost;
  fit.residuals = lm.residuals;
  fit.params["alpha_mag"] = alpha;
  fit.params["phi"] = phi;
  fit.params["tau"] = tau;
  const double se_ln_a2 = std::sqrt(std::max(0.0, lm.covariance(0, 0)));
  const double se_phi = std::sqrt(std::max(0.0, lm.covariance(1, 1)));
  const double se_ln_tau = std::sqrt(std::max(0.0, lm.covariance(2, 2)));
  fit.ci["alpha_mag"] = {std::max(0.0, alpha * (1.0 - se_ln_a2 / 2.0)), alpha * (1.0 + se_ln_a2 / 2.0)};
  fit.ci["phi"] = {phi - se_phi, phi + se_phi};
  fit.ci["tau"] = {tau * std::exp(-se_ln_tau), tau * std::exp(se_ln_tau)};
  if (alpha < 0.2)
    fit.diagnostics.push_back(
        "alpha_tau_degenerate: |alpha| < 0.2, fringe depth barely constrains alpha vs tau");
  if (!lm.converged) fit.diagnostics.push_back("least-squares iteration limit reached");
  fit.check_invariants();
  return fit;
}

FitResult fit_trajectory(const std::vector<TrajectoryPoint>& points, const DriveParams& drive_guess,
                         const TrajectoryFitOptions& opts) {
  if (points.size() < 8) throw std::invalid_argument("fit_trajectory: need >= 8 points");
  if (drive_guess.delta == 0.0)
    throw std::invalid_argument("fit_trajectory: drive_guess.delta must be nonzero");
  double t_lo = points.front().t, t_hi = points.front().t;
  for (const auto& p : points) {
    t_lo = std::min(t_lo, p.t);
    t_hi = std::max(t_hi, p.t);
  }
  // half a return period, judged at the guess detuning with slack for
  // effective detunings up to ~10/7 of it
  const double half_return = kPi / std::abs(drive_guess.delta);
  if (t_hi - t_lo < 0.7 * half_return)
    throw std::invalid_argument("fit_trajectory: points must span at least half a return period");

  const std::size_t m = points.size();
  const double delta_env = drive_guess.delta;

  double bmax = 1e-6;
  for (const auto& p : points) bmax = std::max(bmax, p.alpha_mag);

  // circular mean of phi_i - delta t_i / 2 - pi initializes the const phase
  std::complex<double> acc = 0.0;
  for (const auto& p : points)
    acc += std::exp(std::complex<double>(0.0, p.phi - delta_env * p.t / 2.0 - kPi));
  const double phi_c0 = std::abs(acc) > 0 ? std::arg(acc) : 0.0;

  // x = [ln B,] delta_eff [, phi_c when phases are fitted]
  const int nb = opts.free_amplitude ? 1 : 0;
  const int np = opts.fit_phases ? 1 : 0;
  auto amplitude_of = [&](const Eigen::VectorXd& x) {
    return opts.free_amplitude
               ? std::exp(x[0])
               : std::abs(drive_guess.eta * drive_guess.delta_s / (2.0 * x[nb]));
  };
  Eigen::VectorXd x0(nb + 1 + np);
  if (opts.free_amplitude) x0[0] = std::log(bmax);
  x0[nb] = drive_guess.delta;
  if (opts.fit_phases) x0[nb + 1] = phi_c0;

  auto residuals = [&](const Eigen::VectorXd& x) {
    const double b = opts.free_amplitude
                         ? std::exp(x[0])
                         : std::abs(drive_guess.eta * drive_guess.delta_s / (2.0 * x[nb]));
    const double de = x[nb];
    Eigen::VectorXd r(opts.fit_phases ? 2 * m : m);
    for (std::size_t i = 0; i < m; ++i) {
      const double ti = points[i].t;
      if (opts.fit_phases) {
        const std::complex<double> zm =
            -b * std::exp(std::complex<double>(0.0, delta_env * ti / 2.0 + x[nb + 1])) *
            std::sin(de * ti / 2.0);
        const std::complex<double> zd =
            points[i].alpha_mag * std::exp(std::complex<double>(0.0, points[i].phi));
        r[2 * i] = zd.real() - zm.real();
        r[2 * i + 1] = zd.imag() - zm.imag();
      } else {
        r[i] = points[i].alpha_mag - b * std::abs(std::sin(de * ti / 2.0));
      }
    }
    return r;
  };

  lsq::LmOptions lopts;
  lopts.scale = Eigen::VectorXd::Ones(x0.size());
  lopts.scale[nb] = std::abs(drive_guess.delta) * 1e-3;
  lsq::LmResult lm = lsq::levenberg_marquardt(residuals, x0, lopts);

  const double b_fit = amplitude_of(lm.x);
  const double delta_eff = lm.x[nb];

  FitResult fit;
  fit.converged = lm.converged;
  fit.chi2 = lm.cost;
  fit.residuals = lm.residuals;
  fit.params["amplitude"] = b_fit;
  fit.params["delta_eff"] = delta_eff;
  const double sigma2 = lm.cost / std::max<std::size_t>(1, lm.residuals.size() - x0.size());
  const double se_de = std::sqrt(std::max(0.0, sigma2 * lm.covariance(nb, nb)));
  fit.ci["delta_eff"] = {delta_eff - se_de, delta_eff + se_de};
  if (opts.free_amplitude) {
    const double se_lnb = std::sqrt(std::max(0.0, sigma2 * lm.covariance(0, 0)));
    fit.ci["amplitude"] = {b_fit * std::exp(-se_lnb), b_fit * std::exp(se_lnb)};
  } else {
    fit.ci["amplitude"] = {b_fit, b_fit};
  }
  if (opts.fit_phases) fit.params["phase_const"] = std::remainder(lm.x[nb + 1], kTwoPi);
  if (!lm.converged) fit.diagnostics.push_back("least-squares iteration limit reached");
  fit.check_invariants();
  return fit;
}

FitResult fit_detuning(const std::vector<std::pair<double, double>>& points,
                       const SequenceParams& seq, const std::vector<double>* sigma) {
  seq.validate();
  if (points.size() < 2) throw std::invalid_argument("fit_detuning: need >= 2 points");
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i].first > points[i - 1].first))
      throw std::invalid_argument("fit_detuning: times must be strictly increasing");

  // nearest-branch unwrapping from t = 0
  std::vector<double> phi(points.size());
  phi[0] = points[0].second;
  int branches = 0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double raw = points[i].second;
    const double n = std::round((phi[i - 1] - raw) / kTwoPi);
    phi[i] = raw + n * kTwoPi;
    if (n != 0.0) ++branches;
    if (std::abs(phi[i] - phi[i - 1]) >= kPi * (1.0 - 1e-12))
      throw UnwrapAmbiguityError("fit_detuning: adjacent phases differ by >= pi after unwrapping");
  }
  if (points.size() < 5) throw std::invalid_argument("fit_detuning: need >= 5 points");

  Eigen::VectorXd x(points.size()), y(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    x[i] = points[i].first;
    y[i] = phi[i];
  }
  std::optional<Eigen::VectorXd> sv;
  if (sigma) {
    if (sigma->size() != points.size())
      throw std::invalid_argument("fit_detuning: sigma length mismatch");
    sv = Eigen::Map<const Eigen::VectorXd>(sigma->data(), sigma->size());
  }
  const lsq::LineFit line = lsq::fit_line(x, y, sv ? &*sv : nullptr);

  FitResult fit;
  fit.converged = true;
  fit.chi2 = line.chi2;
  fit.params["delta"] = line.slope;
  fit.params["phi0"] = line.intercept;
  fit.ci["delta"] = {line.slope - line.slope_se, line.slope + line.slope_se};
  fit.ci["phi0"] = {line.intercept - line.intercept_se, line.intercept + line.intercept_se};
  fit.residuals.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    fit.residuals[i] = y[i] - line.slope * x[i] - line.intercept;
  fit.diagnostics.push_back("unwrap_branches=" + std::to_string(branches));
  fit.check_invariants();
  return fit;
}

ContrastModel contrast_model_from_string(const std::string& s) {
  if (s == "ground") return ContrastModel::ground;
  if (s == "thermal_n_independent") return ContrastModel::thermal_n_independent;
  if (s == "thermal_n_dependent") return ContrastModel::thermal_n_dependent;
  throw std::invalid_argument("unknown contrast model: " + s);
}

std::string to_string(ContrastModel m) {
  switch (m) {
    case ContrastModel::ground: return "ground";
    case ContrastModel::thermal_n_independent: return "thermal_n_independent";
    case ContrastModel::thermal_n_dependent: return "thermal_n_dependent";
  }
  return "?";
}

namespace {

int thermal_terms(double nbar, int cap = 2000) {
  if (nbar <= 0.0) return 1;
  const int n = static_cast<int>(std::ceil(std::log(1e-4) / std::log(nbar / (1.0 + nbar))));
  return std::min(cap, std::max(4, n));
}

}  // namespace

FitResult fit_contrast_curve(const MeasurementRecord& record, const ContrastFitSpec& spec) {
  record.validate();
  const std::size_t m = record.size();
  if (m < 8) throw std::invalid_argument("fit_contrast_curve: need >= 8 points");

  Eigen::VectorXd c(m), sig(m), times(m);
  for (std::size_t i = 0; i < m; ++i) {
    times[i] = record.control[i];
    c[i] = 2.0 * record.fraction(i) - 1.0;
    const double qs = (record.successes[i] + 1.0) / (record.shots[i] + 2.0);
    sig[i] = 2.0 * std::sqrt(qs * (1.0 - qs) / record.shots[i]);
  }
  const double c_mean = c.mean();
  double chi2_const = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double r = (c[i] - c_mean) / sig[i];
    chi2_const += r * r;
  }
  const double cdof = static_cast<double>(m) - 1.0;
  if (chi2_const < cdof + 4.0 * std::sqrt(2.0 * cdof))
    throw NonConvergenceError("fit_contrast_curve: record is flat, nothing to fit");

  const std::set<std::string> allowed =
      spec.model == ContrastModel::ground
          ? std::set<std::string>{"delta_s", "delta", "tau"}
          : spec.model == ContrastModel::thermal_n_independent
                ? std::set<std::string>{"delta_s", "delta", "tau", "nbar"}
                : std::set<std::string>{"nbar", "tau"};
  for (const auto& name : spec.free)
    if (!allowed.count(name))
      throw std::invalid_argument("fit_contrast_curve: parameter '" + name +
                                  "' cannot be freed for model " + to_string(spec.model));
  if (spec.free.empty()) throw std::invalid_argument("fit_contrast_curve: no free parameters");

  // precomputed n-dependent kernels |<psi_n^- | psi_n^+>| on the record grid
  Eigen::MatrixXd kernels;
  int n_terms = 0;
  if (spec.model == ContrastModel::thermal_n_dependent) {
    n_terms = thermal_terms(std::max(spec.nbar0 * 2.0, 1.0), 400);
    std::vector<int> n_list(n_terms);
    for (int n = 0; n < n_terms; ++n) n_list[n] = n;
    EvolveOptions eopts = spec.evolve;
    eopts.keep_states = false;
    AlphaFamily fam =
        alpha_n_family(n_list, spec.drive0, times, spec.kernel_model, eopts);
    kernels = fam.overlap.cwiseAbs();
  }

  std::vector<std::string> order;
  for (const char* name : {"delta_s", "delta", "tau", "nbar"})
    if (spec.free.count(name)) order.push_back(name);

  auto pack = [&](const char* name, double value) -> double {
    if (std::string(name) == "delta") return value;
    return std::log(value);
  };
  auto unpack = [&](const std::string& name, double xv) -> double {
    if (name == "delta") return xv;
    return std::exp(xv);
  };

  const double tau0 = std::isinf(spec.drive0.tau) ? 1.0 : spec.drive0.tau;
  Eigen::VectorXd x0(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) {
    if (order[j] == "delta_s") x0[j] = pack("delta_s", spec.drive0.delta_s);
    if (order[j] == "delta") x0[j] = pack("delta", spec.drive0.delta);
    if (order[j] == "tau") x0[j] = pack("tau", tau0);
    if (order[j] == "nbar") x0[j] = pack("nbar", std::max(spec.nbar0, 0.1));
  }

  auto model_curve = [&](const Eigen::VectorXd& x) {
    DriveParams d = spec.drive0;
    double nbar = spec.nbar0;
    for (std::size_t j = 0; j < order.size(); ++j) {
      const double v = unpack(order[j], x[j]);
      if (order[j] == "delta_s") d.delta_s = v;
      if (order[j] == "delta") d.delta = v;
      if (order[j] == "tau") d.tau = v;
      if (order[j] == "nbar") nbar = v;
    }
    Eigen::VectorXd out(m);
    if (spec.model == ContrastModel::ground) {
      for (std::size_t i = 0; i < m; ++i)
        out[i] = contrast_ground(times[i], d) * std::exp(-times[i] / d.tau);
    } else if (spec.model == ContrastModel::thermal_n_independent) {
      const int nt = thermal_terms(nbar);
      const PhononDistribution<> dist = thermal_distribution(nbar, nt);
      const double wsum = dist.p.sum();
      for (std::size_t i = 0; i < m; ++i) {
        const double u = std::norm(alpha_closed(times[i], d));
        const Eigen::VectorXd lag = laguerre_all(nt, 0, 4.0 * u);
        double acc = 0.0;
        for (int n = 0; n <= nt; ++n) acc += dist.p[n] * std::abs(lag[n]);
        out[i] = std::exp(-2.0 * u) * acc / wsum * std::exp(-times[i] / d.tau);
      }
    } else {
      const PhononDistribution<> dist = thermal_distribution(nbar, n_terms - 1);
      const double wsum = dist.p.sum();
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int n = 0; n < n_terms; ++n) acc += dist.p[n] * kernels(n, i);
        out[i] = acc / wsum * std::exp(-times[i] / d.tau);
      }
    }
    return out;
  };

  auto residuals = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd mc = model_curve(x);
    Eigen::VectorXd r(m);
    for (std::size_t i = 0; i < m; ++i) r[i] = (c[i] - mc[i]) / sig[i];
    return r;
  };

  lsq::LmResult lm = lsq::levenberg_marquardt(residuals, x0, {});

  FitResult fit;
  fit.converged = lm.converged;
  fit.chi2 = lm.cost;
  fit.residuals = lm.residuals;
  for (std::size_t j = 0; j < order.size(); ++j) {
    const double v = unpack(order[j], lm.x[j]);
    fit.params[order[j]] = v;
    const double se = std::sqrt(std::max(0.0, lm.covariance(j, j)));
    if (order[j] == "delta")
      fit.ci[order[j]] = {v - se, v + se};
    else
      fit.ci[order[j]] = {v * std::exp(-se), v * std::exp(se)};
  }
  if (!lm.converged) fit.diagnostics.push_back("least-squares iteration limit reached");
  fit.check_invariants();
  return fit;
}

}  // namespace ionphase
