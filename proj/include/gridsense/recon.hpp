#pragma once

// Sparse reconstruction of bus injection currents from voltage snapshots.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridsense/error.hpp"
#include "gridsense/network.hpp"
#include "gridsense/sensing.hpp"

namespace gridsense {

struct MeasurementSet {
  std::map<int, double> voltage_readings;   // bus -> measured voltage (p.u.)
  std::map<int, double> known_injections;   // bus -> known current (p.u.)
  std::map<int, double> power_constraints;  // bus -> known power (p.u.)
  std::set<int> voltage_source_buses;       // regulated buses; reading present, current unknown
};

struct SolverConfig {
  double epsilon = 0.0;  // residual radius ||y - A x||_2 <= epsilon
  int max_iterations = 1000;
  double convergence_tol = 1e-9;
  int newton_max_iter = 50;
  double newton_tol = 1e-10;

  void validate() const {
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ValidationError("epsilon must be finite and >= 0");
    if (max_iterations < 1 || newton_max_iter < 1) throw ValidationError("iteration limits must be positive");
    if (!(convergence_tol > 0.0) || !(newton_tol > 0.0)) throw ValidationError("tolerances must be positive");
  }
};

struct SparseEstimate {
  Eigen::VectorXd injections;
  std::vector<int> support;  // 0-based entries of `injections` above the support threshold
  double residual_norm = 0.0;
  int iterations_used = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // residual norm after each iteration
};

class NewtonError : public NumericalError {
 public:
  NewtonError(const std::string& what, SparseEstimate last) : NumericalError(what), last_(std::move(last)) {}
  const SparseEstimate& last_iterate() const noexcept { return last_; }

 private:
  SparseEstimate last_;
};

inline constexpr double kSupportRatio = 1e-6;

inline std::vector<int> support_of(const Eigen::VectorXd& x, double ratio = kSupportRatio) {
  std::vector<int> out;
  if (x.size() == 0) return out;
  const double cut = ratio * x.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (std::abs(x(i)) > cut && x(i) != 0.0) out.push_back(static_cast<int>(i));
  return out;
}

namespace detail {

inline Eigen::MatrixXd select(const Eigen::MatrixXd& z, const std::vector<int>& row_buses,
                              const std::vector<int>& col_buses) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(row_buses.size()), static_cast<Eigen::Index>(col_buses.size()));
  for (std::size_t r = 0; r < row_buses.size(); ++r)
    for (std::size_t c = 0; c < col_buses.size(); ++c) out(r, c) = z(row_buses[r] - 1, col_buses[c] - 1);
  return out;
}

}  // namespace detail

// y - Z[sensors, K] * I_K for the known injections K.
inline Eigen::VectorXd apply_current_offsets(const Eigen::VectorXd& y, const ImpedanceModel& model,
                                             const std::vector<int>& sensor_buses,
                                             const std::map<int, double>& known) {
  if (y.size() != static_cast<Eigen::Index>(sensor_buses.size()))
    throw ValidationError("voltage vector length does not match the sensor list");
  for (int b : sensor_buses)
    if (!model.has_bus(b)) throw ValidationError("unknown sensor bus " + std::to_string(b));
  Eigen::VectorXd out = y;
  for (const auto& [bus, current] : known) {
    if (!model.has_bus(bus)) throw ValidationError("known injection at unknown bus " + std::to_string(bus));
    for (std::size_t r = 0; r < sensor_buses.size(); ++r) out(r) -= model.impedance(sensor_buses[r] - 1, bus - 1) * current;
  }
  return out;
}

// Minimum-norm least-squares solution, i.e. pinv(A) * y.
inline Eigen::VectorXd min_energy(const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  if (a.size() == 0) throw ValidationError("measurement matrix is empty");
  if (a.rows() != y.size()) throw ValidationError("measurement matrix and vector sizes differ");
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  return cod.solve(y);
}

// Exhaustive search over supports of size 0..s_max for the sparsest
// least-squares fit with residual <= tol. Test-scale only.
inline std::optional<SparseEstimate> solve_l0_oracle(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, int s_max,
                                                     double tol) {
  if (a.cols() > 25 || s_max > 4 || s_max < 0)
    throw ValidationError("l0 oracle is limited to M <= 25 columns and S_max <= 4");
  if (a.rows() != y.size()) throw ValidationError("measurement matrix and vector sizes differ");
  const int m = static_cast<int>(a.cols());
  SparseEstimate est;
  est.injections = Eigen::VectorXd::Zero(m);
  est.converged = true;
  if (y.norm() <= tol) {
    est.residual_norm = y.norm();
    return est;
  }
  for (int size = 1; size <= std::min(s_max, m); ++size) {
    std::vector<int> idx(size);
    for (int i = 0; i < size; ++i) idx[i] = i;
    while (true) {
      Eigen::MatrixXd sub(a.rows(), size);
      for (int i = 0; i < size; ++i) sub.col(i) = a.col(idx[i]);
      const Eigen::VectorXd coef = sub.colPivHouseholderQr().solve(y);
      const double res = (y - sub * coef).norm();
      ++est.iterations_used;
      if (res <= tol) {
        for (int i = 0; i < size; ++i) est.injections(idx[i]) = coef(i);
        est.support = idx;
        est.residual_norm = res;
        return est;
      }
      // next combination in lexicographic order
      int p = size - 1;
      while (p >= 0 && idx[p] == m - size + p) --p;
      if (p < 0) break;
      ++idx[p];
      for (int q = p + 1; q < size; ++q) idx[q] = idx[q - 1] + 1;
    }
  }
  return std::nullopt;
}

namespace detail {

struct HomotopyResult {
  Eigen::VectorXd coef;
  int iterations = 0;
  bool finished = false;
  std::vector<double> trace;
};

// Follows the lasso regularization path min 0.5||y - D b||^2 + lambda ||b||_1
// from lambda = ||D^T y||_inf downwards. Along the path the residual norm is
// non-increasing, so the first point with ||r|| = epsilon (located exactly by
// solving the quadratic on the current linear segment) is the BPDN solution;
// with epsilon = 0 the path runs to lambda = 0, the basis pursuit limit.
// Columns of D must have unit norm and be pairwise non-parallel.
inline HomotopyResult lasso_homotopy(const Eigen::MatrixXd& d, const Eigen::VectorXd& y, double epsilon,
                                     int max_iterations) {
  const auto n = d.rows();
  const auto m = d.cols();
  HomotopyResult out;
  out.coef = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd r = y;
  out.trace.push_back(r.norm());
  if (r.norm() <= epsilon || m == 0) {
    out.finished = true;
    return out;
  }
  Eigen::VectorXd c = d.transpose() * r;
  Eigen::Index first = 0;
  double lambda = c.cwiseAbs().maxCoeff(&first);
  if (!(lambda > 0.0)) {  // y orthogonal to every column
    out.finished = true;
    return out;
  }
  const double lambda0 = lambda;
  std::vector<Eigen::Index> active{first};
  std::vector<bool> in_active(m, false);
  in_active[first] = true;
  Eigen::Index last_dropped = -1;

  for (int iter = 0; iter < max_iterations; ++iter) {
    out.iterations = iter + 1;
    const auto k = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd da(n, k);
    Eigen::VectorXd sgn(k);
    for (Eigen::Index p = 0; p < k; ++p) {
      da.col(p) = d.col(active[p]);
      sgn(p) = c(active[p]) >= 0.0 ? 1.0 : -1.0;
    }
    const Eigen::MatrixXd gram = da.transpose() * da;
    const Eigen::VectorXd dir = gram.completeOrthogonalDecomposition().solve(sgn);
    const Eigen::VectorXd v = da * dir;

    enum class Event { end, add, drop, stop } event = Event::end;
    double gamma = lambda;
    Eigen::Index which = -1;
    const double tiny = 1e-14 * lambda0;
    if (k < n) {
      for (Eigen::Index j = 0; j < m; ++j) {
        if (in_active[j]) continue;
        const double aj = d.col(j).dot(v);
        const double floor = j == last_dropped ? tiny : -tiny;
        for (double s : {1.0, -1.0}) {
          const double denom = 1.0 - s * aj;
          if (denom <= 1e-12) continue;
          const double g = (lambda - s * c(j)) / denom;
          if (g > floor && g < gamma) {
            gamma = std::max(g, 0.0);
            event = Event::add;
            which = j;
          }
        }
      }
    }
    for (Eigen::Index p = 0; p < k; ++p) {
      if (dir(p) == 0.0) continue;
      const double g = -out.coef(active[p]) / dir(p);
      if (g > tiny && g < gamma) {
        gamma = g;
        event = Event::drop;
        which = p;
      }
    }
    if (epsilon > 0.0) {
      // ||r - g v||^2 = epsilon^2 on [0, gamma]
      const double vv = v.squaredNorm(), rv = r.dot(v), rr = r.squaredNorm();
      const double disc = rv * rv - vv * (rr - epsilon * epsilon);
      if (vv > 0.0 && disc >= 0.0) {
        const double g = (rv - std::sqrt(disc)) / vv;
        if (g >= 0.0 && g <= gamma) {
          gamma = g;
          event = Event::stop;
        }
      }
    }

    for (Eigen::Index p = 0; p < k; ++p) out.coef(active[p]) += gamma * dir(p);
    lambda -= gamma;
    if (event == Event::drop) {
      const auto j = active[which];
      out.coef(j) = 0.0;
      in_active[j] = false;
      active.erase(active.begin() + which);
      last_dropped = j;
    } else if (event == Event::add) {
      active.push_back(which);
      in_active[which] = true;
      last_dropped = -1;
    }
    r = y - d * out.coef;
    out.trace.push_back(r.norm());
    if (event == Event::end || event == Event::stop || lambda <= 0.0 || active.empty()) {
      out.finished = true;
      break;
    }
    c = d.transpose() * r;
  }
  return out;
}

// Cosine above which two normalized columns are treated as the same column.
inline constexpr double kParallelCosine = 1.0 - 1e-10;

}  // namespace detail

// Basis pursuit denoising: min ||x||_1 s.t. ||y - A x||_2 <= epsilon.
//
// Columns are scaled to unit norm before solving and the result rescaled.
// Parallel columns are indistinguishable from the measurements; they are
// merged into one column and the merged coefficient is split evenly, which
// is the minimum-energy point among the l1 minimizers and keeps the result
// independent of bus numbering. Zero columns always get a zero coefficient.
inline SparseEstimate solve_bpdn(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, const SolverConfig& cfg) {
  cfg.validate();
  if (a.size() == 0) throw ValidationError("measurement matrix is empty");
  if (a.rows() != y.size()) throw ValidationError("measurement matrix and vector sizes differ");
  if (!a.allFinite() || !y.allFinite()) throw ValidationError("non-finite value in BPDN input");
  const auto n = a.rows();
  const auto m = a.cols();
  const Eigen::VectorXd norms = a.colwise().norm().transpose();
  const double biggest = norms.maxCoeff();

  std::vector<Eigen::Index> reps;
  std::vector<std::vector<std::pair<Eigen::Index, double>>> groups;  // (column, sign relative to rep)
  Eigen::MatrixXd unit = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(norms(j) > detail::kZeroColumnRatio * biggest)) continue;
    unit.col(j) = a.col(j) / norms(j);
    bool merged = false;
    for (std::size_t g = 0; g < reps.size(); ++g) {
      const double cosine = unit.col(reps[g]).dot(unit.col(j));
      if (std::abs(cosine) >= detail::kParallelCosine) {
        groups[g].push_back({j, cosine > 0 ? 1.0 : -1.0});
        merged = true;
        break;
      }
    }
    if (!merged) {
      reps.push_back(j);
      groups.push_back({{j, 1.0}});
    }
  }
  Eigen::MatrixXd d(n, static_cast<Eigen::Index>(reps.size()));
  for (std::size_t g = 0; g < reps.size(); ++g) d.col(static_cast<Eigen::Index>(g)) = unit.col(reps[g]);

  const auto path = detail::lasso_homotopy(d, y, cfg.epsilon, cfg.max_iterations);

  SparseEstimate est;
  est.injections = Eigen::VectorXd::Zero(m);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double share = path.coef(static_cast<Eigen::Index>(g)) / static_cast<double>(groups[g].size());
    for (const auto& [col, sign] : groups[g]) est.injections(col) = sign * share / norms(col);
  }
  est.support = support_of(est.injections);
  est.residual_norm = (y - a * est.injections).norm();
  est.iterations_used = path.iterations;
  est.objective_trace = path.trace;
  est.converged = path.finished && est.residual_norm <= cfg.epsilon + cfg.convergence_tol * std::max(1.0, y.norm());
  return est;
}

// Rows dP_i/dI for each constant-power bus i, with P_i = (Z_i . I) * I_i.
inline Eigen::MatrixXd jacobian_power_rows(const ImpedanceModel& model, const Eigen::VectorXd& current,
                                           const std::vector<int>& power_buses) {
  const int m = model.bus_count();
  if (current.size() != m) throw ValidationError("current vector length must equal the bus count");
  const auto& z = model.impedance;
  Eigen::MatrixXd h(static_cast<Eigen::Index>(power_buses.size()), m);
  for (std::size_t r = 0; r < power_buses.size(); ++r) {
    const int bus = power_buses[r];
    if (!model.has_bus(bus)) throw ValidationError("power constraint at unknown bus " + std::to_string(bus));
    const int i = bus - 1;
    h.row(r) = z.row(i) * current(i);
    h(r, i) = 2.0 * z(i, i) * current(i) + (z.row(i).dot(current) - z(i, i) * current(i));
  }
  return h;
}

namespace detail {

inline void check_measurement_buses(const ImpedanceModel& model, const MeasurementSet& meas) {
  auto check = [&](int bus, const char* what) {
    if (!model.has_bus(bus)) throw ValidationError(std::string(what) + " at unknown bus " + std::to_string(bus));
  };
  for (const auto& [b, v] : meas.voltage_readings) check(b, "voltage reading");
  for (const auto& [b, v] : meas.known_injections) check(b, "known injection");
  for (const auto& [b, v] : meas.power_constraints) {
    check(b, "power constraint");
    if (meas.known_injections.count(b)) throw ValidationError("bus " + std::to_string(b) + " has both a known injection and a power constraint");
  }
  for (int b : meas.voltage_source_buses) {
    check(b, "voltage source");
    if (!meas.voltage_readings.count(b))
      throw ValidationError("voltage source bus " + std::to_string(b) + " has no voltage reading");
    if (meas.known_injections.count(b))
      throw ValidationError("voltage source bus " + std::to_string(b) + " cannot have a known injection");
  }
}

}  // namespace detail

// Damped Newton refinement for constant-power devices. The unknowns are the
// support of `initial` plus the power and voltage-source buses; known
// injections are held fixed. Residual rows are the voltage readings followed
// by one P_k - V_k I_k row per constant-power bus. Each step takes the
// minimum-norm least-squares solution of the linearized system and is
// halved until the residual norm decreases.
inline SparseEstimate constant_power_newton(const ImpedanceModel& model, const MeasurementSet& meas,
                                            const SolverConfig& cfg, const SparseEstimate& initial) {
  cfg.validate();
  detail::check_measurement_buses(model, meas);
  const int m = model.bus_count();
  if (meas.power_constraints.empty()) throw ValidationError("constant_power_newton needs at least one power constraint");
  if (initial.injections.size() != m) throw ValidationError("initial estimate length must equal the bus count");
  const auto& z = model.impedance;

  Eigen::VectorXd current = initial.injections;
  for (const auto& [b, v] : meas.known_injections) current(b - 1) = v;

  std::set<int> unknown_set;
  for (int idx : initial.support) unknown_set.insert(idx + 1);
  for (const auto& [b, p] : meas.power_constraints) unknown_set.insert(b);
  for (int b : meas.voltage_source_buses) unknown_set.insert(b);
  for (const auto& [b, v] : meas.known_injections) unknown_set.erase(b);
  const std::vector<int> unknown(unknown_set.begin(), unknown_set.end());

  std::vector<int> volt_buses, power_buses;
  Eigen::VectorXd volt_meas(static_cast<Eigen::Index>(meas.voltage_readings.size()));
  Eigen::VectorXd power_meas(static_cast<Eigen::Index>(meas.power_constraints.size()));
  for (const auto& [b, v] : meas.voltage_readings) {
    volt_meas(static_cast<Eigen::Index>(volt_buses.size())) = v;
    volt_buses.push_back(b);
  }
  for (const auto& [b, p] : meas.power_constraints) {
    power_meas(static_cast<Eigen::Index>(power_buses.size())) = p;
    power_buses.push_back(b);
  }
  const auto nv = static_cast<Eigen::Index>(volt_buses.size());
  const auto np = static_cast<Eigen::Index>(power_buses.size());

  auto residual = [&](const Eigen::VectorXd& cur) {
    Eigen::VectorXd r(nv + np);
    for (Eigen::Index i = 0; i < nv; ++i) r(i) = volt_meas(i) - z.row(volt_buses[i] - 1).dot(cur);
    for (Eigen::Index i = 0; i < np; ++i) {
      const int b = power_buses[i] - 1;
      r(nv + i) = power_meas(i) - z.row(b).dot(cur) * cur(b);
    }
    return r;
  };
  auto make_estimate = [&](const Eigen::VectorXd& cur, double res, int iters, bool ok,
                           std::vector<double> trace) {
    SparseEstimate e;
    e.injections = cur;
    e.support = support_of(cur);
    e.residual_norm = res;
    e.iterations_used = iters;
    e.converged = ok;
    e.objective_trace = std::move(trace);
    return e;
  };

  // Zero power rows at the seed: start the affected devices at 1e-3 p.u. in
  // the direction of their power sign.
  {
    const Eigen::MatrixXd h = jacobian_power_rows(model, current, power_buses);
    for (Eigen::Index i = 0; i < np; ++i) {
      if (h.row(i).cwiseAbs().maxCoeff() == 0.0 && power_meas(i) != 0.0)
        current(power_buses[i] - 1) = power_meas(i) > 0.0 ? 1e-3 : -1e-3;
    }
  }

  Eigen::VectorXd r = residual(current);
  double norm = r.norm();
  std::vector<double> trace{norm};
  if (unknown.empty()) return make_estimate(current, norm, 0, norm < cfg.newton_tol, trace);

  for (int iter = 1; iter <= cfg.newton_max_iter; ++iter) {
    if (norm < cfg.newton_tol) return make_estimate(current, norm, iter - 1, true, trace);
    const Eigen::MatrixXd h = jacobian_power_rows(model, current, power_buses);
    Eigen::MatrixXd jac(nv + np, static_cast<Eigen::Index>(unknown.size()));
    for (std::size_t c = 0; c < unknown.size(); ++c) {
      const int b = unknown[c] - 1;
      for (Eigen::Index i = 0; i < nv; ++i) jac(i, c) = z(volt_buses[i] - 1, b);
      for (Eigen::Index i = 0; i < np; ++i) jac(nv + i, c) = h(i, b);
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jac);
    if (cod.rank() == 0)
      throw NewtonError("constant-power Jacobian is singular", make_estimate(current, norm, iter - 1, false, trace));
    const Eigen::VectorXd step = cod.solve(r);

    double t = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      Eigen::VectorXd trial = current;
      for (std::size_t c = 0; c < unknown.size(); ++c) trial(unknown[c] - 1) += t * step(c);
      const Eigen::VectorXd tr = residual(trial);
      if (tr.norm() < norm) {
        current = trial;
        r = tr;
        norm = tr.norm();
        accepted = true;
        break;
      }
    }
    trace.push_back(norm);
    if (!accepted) {
      if (cod.rank() < std::min(jac.rows(), jac.cols()))
        throw NewtonError("constant-power Jacobian is singular and damping cannot reduce the residual",
                          make_estimate(current, norm, iter, false, trace));
      // residual is at a local minimum that does not meet the tolerance
      return make_estimate(current, norm, iter, false, trace);
    }
    if (norm < cfg.newton_tol) return make_estimate(current, norm, iter, true, trace);
  }
  return make_estimate(current, norm, cfg.newton_max_iter, norm < cfg.newton_tol, trace);
}

// Full pipeline: voltage rows for every meter and voltage source, known
// injections moved to the right-hand side, BPDN on the remaining buses and a
// constant-power Newton refinement when power constraints are present.
inline SparseEstimate estimate_state(const ImpedanceModel& model, const MeasurementSet& meas, const PlacementPlan& plan,
                                     const SolverConfig& cfg) {
  cfg.validate();
  detail::check_measurement_buses(model, meas);
  const int m = model.bus_count();

  std::vector<int> rows = plan.chosen;
  std::set<int> expected(plan.chosen.begin(), plan.chosen.end());
  if (expected.size() != plan.chosen.size()) throw ValidationError("plan lists a sensor bus twice");
  for (int b : plan.chosen)
    if (!model.has_bus(b)) throw ValidationError("plan references unknown bus " + std::to_string(b));
  for (int b : meas.voltage_source_buses)
    if (expected.insert(b).second) rows.push_back(b);
  std::set<int> have;
  for (const auto& [b, v] : meas.voltage_readings) have.insert(b);
  if (have != expected)
    throw ValidationError("voltage readings must cover exactly the planned meters plus voltage-source buses");

  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y(i) = meas.voltage_readings.at(rows[i]);
  const Eigen::VectorXd y_offset = apply_current_offsets(y, model, rows, meas.known_injections);

  std::vector<int> unknown;
  for (int b = 1; b <= m; ++b)
    if (!meas.known_injections.count(b)) unknown.push_back(b);

  Eigen::VectorXd full = Eigen::VectorXd::Zero(m);
  for (const auto& [b, v] : meas.known_injections) full(b - 1) = v;
  SparseEstimate est;
  if (unknown.empty()) {
    est.converged = true;
  } else {
    const Eigen::MatrixXd a = detail::select(model.impedance, rows, unknown);
    est = solve_bpdn(a, y_offset, cfg);
    for (std::size_t c = 0; c < unknown.size(); ++c) full(unknown[c] - 1) = est.injections(c);
  }
  est.injections = full;
  est.support = support_of(full);
  est.residual_norm = (y - detail::select(model.impedance, rows, all_buses(m)) * full).norm();

  if (!meas.power_constraints.empty()) {
    SparseEstimate seed = est;
    seed.support.clear();
    for (int b : unknown)
      if (std::find(est.support.begin(), est.support.end(), b - 1) != est.support.end()) seed.support.push_back(b - 1);
    return constant_power_newton(model, meas, cfg, seed);
  }
  return est;
}

// Snapshot text record:
//   gridsense-snapshot v1
//   [voltages]          bus value
//   [known_injections]  bus value
//   [power]             bus value
//   [voltage_sources]   bus
inline MeasurementSet read_snapshot(std::istream& in) {
  MeasurementSet meas;
  enum class Section { none, voltages, known, power, sources } section = Section::none;
  bool header = false;
  std::string raw;
  int lineno = 0;
  auto put = [&](std::map<int, double>& into, const std::vector<std::string>& tok) {
    if (tok.size() != 2) throw ParseError("expected: bus value", lineno);
    const int bus = detail::parse_int(tok[0], lineno);
    if (!into.emplace(bus, detail::parse_number(tok[1], lineno)).second)
      throw ParseError("bus " + tok[0] + " listed twice", lineno);
  };
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = detail::strip_comment(raw);
    if (line.empty()) continue;
    if (!header) {
      if (line != "gridsense-snapshot v1") throw ParseError("expected header 'gridsense-snapshot v1'", lineno);
      header = true;
      continue;
    }
    if (line == "[voltages]") { section = Section::voltages; continue; }
    if (line == "[known_injections]") { section = Section::known; continue; }
    if (line == "[power]") { section = Section::power; continue; }
    if (line == "[voltage_sources]") { section = Section::sources; continue; }
    if (line.front() == '[') throw ParseError("unknown section " + line, lineno);
    const auto tok = detail::split_ws(line);
    switch (section) {
      case Section::none: throw ParseError("data before the first section", lineno);
      case Section::voltages: put(meas.voltage_readings, tok); break;
      case Section::known: put(meas.known_injections, tok); break;
      case Section::power: put(meas.power_constraints, tok); break;
      case Section::sources:
        for (const auto& t : tok) meas.voltage_source_buses.insert(detail::parse_int(t, lineno));
        break;
    }
  }
  if (!header) throw ParseError("empty snapshot file", 0);
  return meas;
}

inline void write_snapshot(std::ostream& out, const MeasurementSet& meas) {
  std::ostringstream s;
  s << std::setprecision(17);
  s << "gridsense-snapshot v1\n[voltages]\n";
  for (const auto& [b, v] : meas.voltage_readings) s << b << ' ' << v << '\n';
  s << "[known_injections]\n";
  for (const auto& [b, v] : meas.known_injections) s << b << ' ' << v << '\n';
  s << "[power]\n";
  for (const auto& [b, v] : meas.power_constraints) s << b << ' ' << v << '\n';
  s << "[voltage_sources]\n";
  for (int b : meas.voltage_source_buses) s << b << '\n';
  out << s.str();
}

}  // namespace gridsense
