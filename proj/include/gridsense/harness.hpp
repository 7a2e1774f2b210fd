#pragma once

// Monte Carlo benchmark engine: sparse operating states, exact forward
// simulation, meter noise, estimation and reconstruction metrics.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gridsense/error.hpp"
#include "gridsense/network.hpp"
#include "gridsense/recon.hpp"
#include "gridsense/sensing.hpp"

namespace gridsense {

enum class SignPolicy { sources_positive, loads_negative, mixed };
enum class Estimator { cs, min_energy };

inline const char* to_string(SignPolicy p) {
  switch (p) {
    case SignPolicy::sources_positive: return "sources_positive";
    case SignPolicy::loads_negative: return "loads_negative";
    case SignPolicy::mixed: return "mixed";
  }
  return "unknown";
}

inline const char* to_string(Estimator e) { return e == Estimator::cs ? "cs" : "min-energy"; }
inline const char* to_string(PlacementMethod m) { return detail::method_name(m); }

inline constexpr double kSuccessThreshold = 0.05;

struct ScenarioSpec {
  PlacementPlan placement;
  int sparsity = 1;
  double magnitude_low = 0.5;
  double magnitude_high = 1.5;
  SignPolicy sign_policy = SignPolicy::mixed;
  double noise_std = 0.0;
  int trials = 1;
  std::uint64_t seed = 0;
  std::vector<int> excluded_buses;         // never carry a sampled injection
  std::map<int, double> known_injections;  // fixed, metered currents (also excluded from sampling)
  std::optional<double> epsilon;           // BPDN radius; defaults to noise_std * sqrt(N)

  void validate(int m) const {
    if (sparsity < 1 || sparsity > m) throw ValidationError("sparsity must lie in 1..M");
    if (!(magnitude_low < magnitude_high) || !(magnitude_low >= 0.0))
      throw ValidationError("injection magnitude range must satisfy 0 <= low < high");
    if (trials < 1) throw ValidationError("trials must be at least 1");
    if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be >= 0");
    if (epsilon && !(*epsilon >= 0.0)) throw ValidationError("epsilon must be >= 0");
  }
};

struct TrialResult {
  Eigen::VectorXd true_injections;
  Eigen::VectorXd estimated_injections;
  double max_relative_error = 0.0;
  double rmse = 0.0;
  bool success = false;
};

namespace detail {

enum Stream : std::uint32_t { kStateStream = 1, kNoiseStream = 2, kPlacementStream = 3 };

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t index, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

}  // namespace detail

// Deterministic in (seed, trial_index): a uniform support of `sparsity`
// eligible buses with magnitudes uniform in the configured range.
inline Eigen::VectorXd sample_sparse_state(int m, const ScenarioSpec& spec, std::uint64_t trial_index) {
  spec.validate(m);
  std::vector<int> eligible;
  for (int b = 1; b <= m; ++b) {
    const bool excluded = std::find(spec.excluded_buses.begin(), spec.excluded_buses.end(), b) !=
                              spec.excluded_buses.end() ||
                          spec.known_injections.count(b) > 0;
    if (!excluded) eligible.push_back(b);
  }
  if (spec.sparsity > static_cast<int>(eligible.size()))
    throw ValidationError("sparsity " + std::to_string(spec.sparsity) + " exceeds the " +
                          std::to_string(eligible.size()) + " eligible buses");
  auto rng = detail::make_rng(spec.seed, trial_index, detail::kStateStream);
  const auto e = static_cast<int>(eligible.size());
  for (int i = 0; i < spec.sparsity; ++i) {
    std::uniform_int_distribution<int> pick(i, e - 1);
    std::swap(eligible[i], eligible[pick(rng)]);
  }
  std::uniform_real_distribution<double> magnitude(spec.magnitude_low, spec.magnitude_high);
  std::bernoulli_distribution coin(0.5);
  Eigen::VectorXd state = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < spec.sparsity; ++i) {
    double value = magnitude(rng);
    if (spec.sign_policy == SignPolicy::loads_negative) value = -value;
    if (spec.sign_policy == SignPolicy::mixed && coin(rng)) value = -value;
    state(eligible[i] - 1) = value;
  }
  return state;
}

inline Eigen::VectorXd simulate_measurements(const ImpedanceModel& model, const PlacementPlan& plan,
                                             const Eigen::VectorXd& injections) {
  if (injections.size() != model.bus_count()) throw ValidationError("injection vector length must equal the bus count");
  Eigen::VectorXd y(static_cast<Eigen::Index>(plan.chosen.size()));
  for (std::size_t i = 0; i < plan.chosen.size(); ++i) {
    if (!model.has_bus(plan.chosen[i])) throw ValidationError("plan references unknown bus");
    y(i) = model.impedance.row(plan.chosen[i] - 1).dot(injections);
  }
  return y;
}

// Independent absolute Gaussian meter errors, deterministic in (seed, trial_index).
inline Eigen::VectorXd add_noise(const Eigen::VectorXd& y, double noise_std, std::uint64_t seed,
                                 std::uint64_t trial_index) {
  if (!(noise_std >= 0.0)) throw ValidationError("noise_std must be >= 0");
  if (noise_std == 0.0) return y;
  auto rng = detail::make_rng(seed, trial_index, detail::kNoiseStream);
  std::normal_distribution<double> gauss(0.0, noise_std);
  Eigen::VectorXd out = y;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += gauss(rng);
  return out;
}

// Error metrics of one estimate: max error relative to the largest true
// injection, and RMSE over every bus.
inline TrialResult score_trial(Eigen::VectorXd truth, Eigen::VectorXd estimate) {
  TrialResult res;
  const double scale = truth.cwiseAbs().maxCoeff();
  const Eigen::VectorXd err = estimate - truth;
  res.max_relative_error = scale > 0.0 ? err.cwiseAbs().maxCoeff() / scale : err.cwiseAbs().maxCoeff();
  res.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, err.size())));
  res.success = res.max_relative_error < kSuccessThreshold;
  res.true_injections = std::move(truth);
  res.estimated_injections = std::move(estimate);
  return res;
}

inline TrialResult run_trial(const ImpedanceModel& model, const ScenarioSpec& spec, Estimator estimator,
                             std::uint64_t trial_index, SolverConfig cfg = {}) {
  const int m = model.bus_count();
  spec.validate(m);
  Eigen::VectorXd truth = sample_sparse_state(m, spec, trial_index);
  for (const auto& [b, v] : spec.known_injections) truth(b - 1) = v;
  const Eigen::VectorXd exact = simulate_measurements(model, spec.placement, truth);
  const Eigen::VectorXd noisy = add_noise(exact, spec.noise_std, spec.seed, trial_index);

  Eigen::VectorXd estimate;
  if (estimator == Estimator::cs) {
    MeasurementSet meas;
    for (std::size_t i = 0; i < spec.placement.chosen.size(); ++i) meas.voltage_readings[spec.placement.chosen[i]] = noisy(i);
    meas.known_injections = spec.known_injections;
    cfg.epsilon = spec.epsilon.value_or(spec.noise_std * std::sqrt(static_cast<double>(noisy.size())));
    estimate = estimate_state(model, meas, spec.placement, cfg).injections;
  } else {
    const Eigen::VectorXd offset = apply_current_offsets(noisy, model, spec.placement.chosen, spec.known_injections);
    std::vector<int> unknown;
    for (int b = 1; b <= m; ++b)
      if (!spec.known_injections.count(b)) unknown.push_back(b);
    estimate = Eigen::VectorXd::Zero(m);
    for (const auto& [b, v] : spec.known_injections) estimate(b - 1) = v;
    if (!unknown.empty()) {
      const Eigen::VectorXd x = min_energy(detail::select(model.impedance, spec.placement.chosen, unknown), offset);
      for (std::size_t c = 0; c < unknown.size(); ++c) estimate(unknown[c] - 1) = x(c);
    }
  }
  return score_trial(std::move(truth), std::move(estimate));
}

struct BenchmarkCell {
  int sparsity = 1;
  int meters = 1;
  PlacementMethod placement = PlacementMethod::greedy;
  Estimator estimator = Estimator::cs;
  double noise_std = 0.0;
};

struct BenchmarkGrid {
  std::string model_id;
  std::vector<BenchmarkCell> cells;
  int trials = 1000;
  std::uint64_t seed = 0;
  double magnitude_low = 0.5;
  double magnitude_high = 1.5;
  SignPolicy sign_policy = SignPolicy::mixed;
  std::optional<double> epsilon;
  std::vector<int> excluded_buses;
  std::map<int, double> known_injections;
  int random_placements = 100;          // distinct random plans per random cell
  std::optional<PlacementPlan> file_plan;  // used by PlacementMethod::file cells
  SolverConfig solver;
};

struct CellResult {
  BenchmarkCell cell;
  double reconstruction_ratio = 0.0;
  double mean_rmse = 0.0;
  double mean_coherence = 0.0;
  int trials = 0;
};

struct BenchmarkReport {
  std::string model_id;
  std::uint64_t seed = 0;
  int trials = 0;
  double magnitude_low = 0.0;
  double magnitude_high = 0.0;
  SignPolicy sign_policy = SignPolicy::mixed;
  std::vector<CellResult> cells;
};

// Random cells spread their trials over min(random_placements, trials)
// placements in equal consecutive blocks. Trial t of every cell with the
// same sparsity sees the same sampled state, so placements and estimators
// are compared on common states. Work is spread over `threads` workers; the
// report does not depend on the thread count.
inline BenchmarkReport run_benchmark(const ImpedanceModel& model, const BenchmarkGrid& grid, int threads = 1) {
  if (grid.cells.empty()) throw ValidationError("benchmark grid is empty");
  if (grid.trials < 1) throw ValidationError("trials must be at least 1");
  if (grid.random_placements < 1) throw ValidationError("random_placements must be at least 1");
  threads = std::max(1, threads);
  const int m = model.bus_count();

  // Placement plans are resolved up front, single-threaded.
  std::map<int, PlacementPlan> greedy;
  std::map<std::pair<int, int>, PlacementPlan> random;
  const int placements = std::min(grid.random_placements, grid.trials);
  std::vector<ScenarioSpec> base(grid.cells.size());
  for (std::size_t c = 0; c < grid.cells.size(); ++c) {
    const auto& cell = grid.cells[c];
    auto& spec = base[c];
    spec.sparsity = cell.sparsity;
    spec.magnitude_low = grid.magnitude_low;
    spec.magnitude_high = grid.magnitude_high;
    spec.sign_policy = grid.sign_policy;
    spec.noise_std = cell.noise_std;
    spec.trials = grid.trials;
    spec.seed = grid.seed;
    spec.excluded_buses = grid.excluded_buses;
    spec.known_injections = grid.known_injections;
    spec.epsilon = grid.epsilon;
    spec.validate(m);
    switch (cell.placement) {
      case PlacementMethod::greedy:
        if (!greedy.count(cell.meters)) greedy.emplace(cell.meters, greedy_place_sensors(model, cell.meters));
        spec.placement = greedy.at(cell.meters);
        break;
      case PlacementMethod::random:
        for (int p = 0; p < placements; ++p) {
          const auto key = std::make_pair(cell.meters, p);
          if (!random.count(key)) {
            const auto s = detail::make_rng(grid.seed, static_cast<std::uint64_t>(cell.meters) << 32 | p,
                                            detail::kPlacementStream)();
            random.emplace(key, random_place_sensors(model, cell.meters, s));
          }
        }
        break;
      case PlacementMethod::file:
        if (!grid.file_plan) throw ValidationError("file placement requested without a plan");
        spec.placement = *grid.file_plan;
        break;
    }
  }

  const auto ncells = grid.cells.size();
  const auto ntrials = static_cast<std::size_t>(grid.trials);
  std::vector<TrialResult> results(ncells * ntrials);
  std::vector<double> coherence(ncells * ntrials, 0.0);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1);
      if (task >= results.size()) return;
      const std::size_t c = task / ntrials, t = task % ntrials;
      try {
        const auto& cell = grid.cells[c];
        if (cell.placement == PlacementMethod::random) {
          ScenarioSpec spec = base[c];
          const int p = static_cast<int>(t * static_cast<std::size_t>(placements) / ntrials);
          spec.placement = random.at({cell.meters, p});
          results[task] = run_trial(model, spec, cell.estimator, t, grid.solver);
          coherence[task] = spec.placement.final_coherence;
        } else {
          results[task] = run_trial(model, base[c], cell.estimator, t, grid.solver);
          coherence[task] = base[c].placement.final_coherence;
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(results.size());
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  BenchmarkReport report;
  report.model_id = grid.model_id;
  report.seed = grid.seed;
  report.trials = grid.trials;
  report.magnitude_low = grid.magnitude_low;
  report.magnitude_high = grid.magnitude_high;
  report.sign_policy = grid.sign_policy;
  for (std::size_t c = 0; c < ncells; ++c) {
    CellResult cr;
    cr.cell = grid.cells[c];
    cr.trials = grid.trials;
    int ok = 0;
    double rmse = 0.0, coh = 0.0;
    for (std::size_t t = 0; t < ntrials; ++t) {
      ok += results[c * ntrials + t].success ? 1 : 0;
      rmse += results[c * ntrials + t].rmse;
      coh += coherence[c * ntrials + t];
    }
    cr.reconstruction_ratio = static_cast<double>(ok) / static_cast<double>(ntrials);
    cr.mean_rmse = rmse / static_cast<double>(ntrials);
    cr.mean_coherence = coh / static_cast<double>(ntrials);
    report.cells.push_back(cr);
  }
  return report;
}

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace detail

inline void write_report_csv(std::ostream& out, const BenchmarkReport& rep) {
  out << "S,meters,placement,estimator,noise_std,ratio,mean_rmse,trials,seed\n";
  for (const auto& c : rep.cells) {
    out << c.cell.sparsity << ',' << c.cell.meters << ',' << to_string(c.cell.placement) << ','
        << to_string(c.cell.estimator) << ',' << detail::fmt("%.6g", c.cell.noise_std) << ','
        << detail::fmt("%.6f", c.reconstruction_ratio) << ',' << detail::fmt("%.9g", c.mean_rmse) << ',' << c.trials
        << ',' << rep.seed << '\n';
  }
}

inline nlohmann::json report_to_json(const BenchmarkReport& rep) {
  nlohmann::json j;
  j["model"] = rep.model_id;
  j["seed"] = rep.seed;
  j["trials"] = rep.trials;
  j["magnitude_range"] = {rep.magnitude_low, rep.magnitude_high};
  j["sign_policy"] = to_string(rep.sign_policy);
  j["success_rule"] = "max|I_est - I_true| / max|I_true| < 0.05";
  j["cells"] = nlohmann::json::array();
  for (const auto& c : rep.cells) {
    j["cells"].push_back({{"S", c.cell.sparsity},
                          {"meters", c.cell.meters},
                          {"placement", to_string(c.cell.placement)},
                          {"estimator", to_string(c.cell.estimator)},
                          {"noise_std", c.cell.noise_std},
                          {"ratio", c.reconstruction_ratio},
                          {"mean_rmse", c.mean_rmse},
                          {"mean_coherence", c.mean_coherence},
                          {"trials", c.trials},
                          {"seed", rep.seed}});
  }
  return j;
}

inline void write_report_table(std::ostream& out, const BenchmarkReport& rep) {
  out << "model " << rep.model_id << "  seed " << rep.seed << "  trials/cell " << rep.trials << "  magnitudes ["
      << rep.magnitude_low << ", " << rep.magnitude_high << "] p.u.  signs " << to_string(rep.sign_policy) << "\n";
  char line[160];
  std::snprintf(line, sizeof line, "%4s %7s %-9s %-10s %10s %9s %12s %10s\n", "S", "meters", "placement", "estimator",
                "noise_std", "ratio", "mean_rmse", "coherence");
  out << line;
  for (const auto& c : rep.cells) {
    std::snprintf(line, sizeof line, "%4d %7d %-9s %-10s %10.4g %8.1f%% %12.6g %10.6f\n", c.cell.sparsity,
                  c.cell.meters, to_string(c.cell.placement), to_string(c.cell.estimator), c.cell.noise_std,
                  100.0 * c.reconstruction_ratio, c.mean_rmse, c.mean_coherence);
    out << line;
  }
}

// x/y series for external plotting: ratio against S per (placement,
// estimator, meters, noise), then mean RMSE against noise per (S, meters,
// placement, estimator). Blocks are separated by blank lines.
inline void write_plot_data(std::ostream& out, const BenchmarkReport& rep) {
  std::map<std::tuple<int, int, int, double>, std::vector<std::pair<double, double>>> by_s;
  std::map<std::tuple<int, int, int, int>, std::vector<std::pair<double, double>>> by_noise;
  for (const auto& c : rep.cells) {
    by_s[{static_cast<int>(c.cell.placement), static_cast<int>(c.cell.estimator), c.cell.meters, c.cell.noise_std}]
        .push_back({static_cast<double>(c.cell.sparsity), c.reconstruction_ratio});
    by_noise[{c.cell.sparsity, c.cell.meters, static_cast<int>(c.cell.placement), static_cast<int>(c.cell.estimator)}]
        .push_back({c.cell.noise_std, c.mean_rmse});
  }
  for (auto& [key, pts] : by_s) {
    const auto& [pl, est, meters, noise] = key;
    std::sort(pts.begin(), pts.end());
    out << "# series ratio_vs_S placement=" << to_string(static_cast<PlacementMethod>(pl))
        << " estimator=" << to_string(static_cast<Estimator>(est)) << " meters=" << meters
        << " noise_std=" << detail::fmt("%.6g", noise) << "\n# x=S y=ratio\n";
    for (const auto& [x, y] : pts) out << detail::fmt("%.6g", x) << ' ' << detail::fmt("%.6f", y) << '\n';
    out << '\n';
  }
  for (auto& [key, pts] : by_noise) {
    const auto& [s, meters, pl, est] = key;
    std::sort(pts.begin(), pts.end());
    out << "# series rmse_vs_noise S=" << s << " meters=" << meters
        << " placement=" << to_string(static_cast<PlacementMethod>(pl))
        << " estimator=" << to_string(static_cast<Estimator>(est)) << "\n# x=noise_std y=mean_rmse\n";
    for (const auto& [x, y] : pts) out << detail::fmt("%.6g", x) << ' ' << detail::fmt("%.9g", y) << '\n';
    out << '\n';
  }
}

}  // namespace gridsense
