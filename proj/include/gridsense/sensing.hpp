#pragma once

// Measurement matrices, Gram-matrix coherence and coherence-driven sensor
// placement.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridsense/error.hpp"
#include "gridsense/network.hpp"

namespace gridsense {

struct MeasurementMatrix {
  Eigen::MatrixXd rows;             // one row per sensor
  std::vector<int> sensor_buses;    // row k measures bus sensor_buses[k]
  std::vector<int> candidate_buses; // column j is the injection at candidate_buses[j]
};

struct GramReport {
  Eigen::MatrixXd gram;         // normalized-column Gram matrix; zero columns stay zero
  double max_offdiag = 0.0;     // max |gram - I| over non-zero columns
  double mutual_coherence = 0.0;
  std::vector<int> zero_columns;  // column indices (or bus ids when built from a MeasurementMatrix)
};

enum class PlacementMethod { greedy, random, file };

struct PlacementPlan {
  PlacementMethod method = PlacementMethod::greedy;
  std::vector<int> chosen;
  std::vector<double> objective_trace;
  double final_coherence = 0.0;
  std::vector<int> unobserved_buses;  // candidate columns still all-zero after the last pick
};

struct RecoveryBoundReport {
  double mu = 0.0;
  int sparsity = 1;
  int signal_dimension = 0;
  double bound_factor = 0.0;  // mu^2 * S * ln(signal_dimension)
  int sensors_available = 0;
};

inline std::vector<int> all_buses(int m) {
  std::vector<int> ids(m);
  for (int i = 0; i < m; ++i) ids[i] = i + 1;
  return ids;
}

namespace detail {

// A column is treated as zero when its norm is negligible next to the
// largest column of the same matrix.
inline constexpr double kZeroColumnRatio = 1e-12;
// Max norms closer than this count as equal in the greedy tie rules.
inline constexpr double kTieTolerance = 1e-12;

inline void check_bus_list(const ImpedanceModel& model, const std::vector<int>& ids, const char* what,
                           bool require_distinct) {
  std::set<int> seen;
  for (int id : ids) {
    if (!model.has_bus(id)) throw ValidationError(std::string("unknown ") + what + " bus " + std::to_string(id));
    if (require_distinct && !seen.insert(id).second)
      throw ValidationError(std::string("duplicate ") + what + " bus " + std::to_string(id));
  }
}

inline const char* method_name(PlacementMethod m) {
  switch (m) {
    case PlacementMethod::greedy: return "greedy";
    case PlacementMethod::random: return "random";
    case PlacementMethod::file: return "file";
  }
  return "unknown";
}

}  // namespace detail

inline MeasurementMatrix assemble_measurement_matrix(const ImpedanceModel& model, const std::vector<int>& sensor_buses,
                                                     const std::vector<int>& candidate_buses) {
  detail::check_bus_list(model, sensor_buses, "sensor", true);
  detail::check_bus_list(model, candidate_buses, "candidate", true);
  MeasurementMatrix out;
  out.rows.resize(static_cast<Eigen::Index>(sensor_buses.size()), static_cast<Eigen::Index>(candidate_buses.size()));
  for (std::size_t r = 0; r < sensor_buses.size(); ++r)
    for (std::size_t c = 0; c < candidate_buses.size(); ++c)
      out.rows(r, c) = model.impedance(sensor_buses[r] - 1, candidate_buses[c] - 1);
  out.sensor_buses = sensor_buses;
  out.candidate_buses = candidate_buses;
  return out;
}

// zero_columns are returned as 0-based column indices.
inline GramReport gram_coherence(const Eigen::MatrixXd& a) {
  if (a.size() == 0) throw ValidationError("measurement matrix is empty");
  const Eigen::VectorXd norms = a.colwise().norm().transpose();
  const double biggest = norms.maxCoeff();
  if (!(biggest > 0.0)) throw ValidationError("every column of the measurement matrix is zero");
  GramReport rep;
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(a.rows(), a.cols());
  std::vector<Eigen::Index> live;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (norms(j) <= detail::kZeroColumnRatio * biggest) {
      rep.zero_columns.push_back(static_cast<int>(j));
    } else {
      d.col(j) = a.col(j) / norms(j);
      live.push_back(j);
    }
  }
  rep.gram = d.transpose() * d;
  rep.gram = 0.5 * (rep.gram + rep.gram.transpose()).eval();
  for (auto j : live) rep.gram(j, j) = 1.0;
  double worst = 0.0;
  for (std::size_t p = 0; p < live.size(); ++p)
    for (std::size_t q = p + 1; q < live.size(); ++q) worst = std::max(worst, std::abs(rep.gram(live[p], live[q])));
  rep.max_offdiag = std::min(worst, 1.0);
  rep.mutual_coherence = rep.max_offdiag;
  return rep;
}

// Same as above, but zero_columns are reported as candidate bus ids.
inline GramReport gram_coherence(const MeasurementMatrix& a) {
  auto rep = gram_coherence(a.rows);
  for (auto& c : rep.zero_columns) c = a.candidate_buses[c];
  return rep;
}

namespace detail {

struct CrossScore {
  double coherence = 0.0;
  int pairs_at_max = 0;  // column pairs within kTieTolerance of the max
};

// Coherence of the matrix whose unnormalized Gram matrix is `cross`.
inline CrossScore score_cross(const Eigen::MatrixXd& cross) {
  const Eigen::VectorXd sq = cross.diagonal();
  const double biggest = sq.maxCoeff();
  const double floor = kZeroColumnRatio * kZeroColumnRatio * biggest;
  const auto m = cross.rows();
  CrossScore score;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(sq(i) > floor)) continue;
    for (Eigen::Index j = i + 1; j < m; ++j) {
      if (!(sq(j) > floor)) continue;
      const double v = std::min(std::abs(cross(i, j)) / std::sqrt(sq(i) * sq(j)), 1.0);
      if (v > score.coherence + kTieTolerance) {
        score.coherence = v;
        score.pairs_at_max = 1;
      } else if (v >= score.coherence - kTieTolerance) {
        score.coherence = std::max(score.coherence, v);
        ++score.pairs_at_max;
      }
    }
  }
  return score;
}

inline double coherence_from_cross(const Eigen::MatrixXd& cross) { return score_cross(cross).coherence; }

inline std::vector<int> zero_columns_from_cross(const Eigen::MatrixXd& cross) {
  const Eigen::VectorXd sq = cross.diagonal();
  const double floor = kZeroColumnRatio * kZeroColumnRatio * sq.maxCoeff();
  std::vector<int> out;
  for (Eigen::Index i = 0; i < sq.size(); ++i)
    if (!(sq(i) > floor)) out.push_back(static_cast<int>(i) + 1);
  return out;
}

}  // namespace detail

// Greedy max-norm placement. Each round tries every remaining candidate row
// together with the rows already chosen and keeps the one whose normalized
// Gram matrix is closest to identity in max norm. The first round has only
// one row, where every off-diagonal has magnitude 1, so it instead picks the
// row with the most non-zero entries.
//
// Equal max norms are common: an unmetered bus hanging off a single branch
// has a column exactly parallel to its neighbour's, pinning the max at 1
// until every such pair is resolved. Ties therefore go to the candidate
// leaving fewer column pairs at the max, then to the lowest bus id.
//
// Coherence is evaluated over every bus column. The unnormalized Gram matrix
// is updated by a rank-one term per candidate, so a round costs O(C * M^2).
inline PlacementPlan greedy_place_sensors(const ImpedanceModel& model, int k,
                                          std::vector<int> candidate_sensor_buses = {}) {
  const int m = model.bus_count();
  if (candidate_sensor_buses.empty()) candidate_sensor_buses = all_buses(m);
  detail::check_bus_list(model, candidate_sensor_buses, "candidate sensor", true);
  std::sort(candidate_sensor_buses.begin(), candidate_sensor_buses.end());
  if (k < 1 || k > static_cast<int>(candidate_sensor_buses.size()))
    throw ValidationError("sensor count k=" + std::to_string(k) + " outside 1.." +
                          std::to_string(candidate_sensor_buses.size()));
  const auto& z = model.impedance;
  const double entry_floor = detail::kZeroColumnRatio * z.cwiseAbs().maxCoeff();
  const std::size_t none = candidate_sensor_buses.size();

  PlacementPlan plan;
  plan.method = PlacementMethod::greedy;
  std::vector<bool> used(candidate_sensor_buses.size(), false);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(m, m);

  for (int round = 0; round < k; ++round) {
    std::size_t best = none;
    if (round == 0) {
      long most = -1;
      for (std::size_t c = 0; c < candidate_sensor_buses.size(); ++c) {
        const long count = (z.row(candidate_sensor_buses[c] - 1).array().abs() > entry_floor).count();
        if (count > most) {
          most = count;
          best = c;
        }
      }
    } else {
      // Candidates are scored independently; the reduction below runs in id order.
      std::vector<detail::CrossScore> scores(candidate_sensor_buses.size());
      for (std::size_t c = 0; c < candidate_sensor_buses.size(); ++c) {
        if (used[c]) continue;
        const Eigen::VectorXd row = z.row(candidate_sensor_buses[c] - 1).transpose();
        scores[c] = detail::score_cross(cross + row * row.transpose());
      }
      for (std::size_t c = 0; c < candidate_sensor_buses.size(); ++c) {
        if (used[c]) continue;
        if (best == none) {
          best = c;
          continue;
        }
        const auto& s = scores[c];
        const auto& b = scores[best];
        if (s.coherence < b.coherence - detail::kTieTolerance ||
            (s.coherence <= b.coherence + detail::kTieTolerance && s.pairs_at_max < b.pairs_at_max))
          best = c;
      }
    }
    used[best] = true;
    const int bus = candidate_sensor_buses[best];
    const Eigen::VectorXd row = z.row(bus - 1).transpose();
    cross += row * row.transpose();
    plan.chosen.push_back(bus);
    plan.objective_trace.push_back(detail::coherence_from_cross(cross));
  }
  plan.final_coherence = plan.objective_trace.back();
  plan.unobserved_buses = detail::zero_columns_from_cross(cross);
  return plan;
}

// Uniform k-subset of all buses. The chosen ids are returned sorted.
inline PlacementPlan random_place_sensors(const ImpedanceModel& model, int k, std::uint64_t seed) {
  const int m = model.bus_count();
  if (k < 1 || k > m) throw ValidationError("sensor count k=" + std::to_string(k) + " outside 1.." + std::to_string(m));
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x9e3779b9u};
  std::mt19937_64 rng(seq);
  auto ids = all_buses(m);
  // partial Fisher-Yates
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, m - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  PlacementPlan plan;
  plan.method = PlacementMethod::random;
  plan.chosen = ids;
  const auto a = assemble_measurement_matrix(model, ids, all_buses(m));
  const auto rep = gram_coherence(a);
  plan.final_coherence = rep.mutual_coherence;
  plan.objective_trace = {plan.final_coherence};
  plan.unobserved_buses = rep.zero_columns;
  return plan;
}

// Re-derives coherence and unobserved buses of an externally supplied sensor list.
inline PlacementPlan plan_from_buses(const ImpedanceModel& model, std::vector<int> buses) {
  const auto a = assemble_measurement_matrix(model, buses, all_buses(model.bus_count()));
  const auto rep = gram_coherence(a);
  PlacementPlan plan;
  plan.method = PlacementMethod::file;
  plan.chosen = std::move(buses);
  plan.final_coherence = rep.mutual_coherence;
  plan.objective_trace = {plan.final_coherence};
  plan.unobserved_buses = rep.zero_columns;
  return plan;
}

inline RecoveryBoundReport recovery_bound_report(const GramReport& report, int sparsity, int sensors_available) {
  if (sparsity < 1) throw ValidationError("sparsity must be at least 1");
  RecoveryBoundReport out;
  out.mu = report.mutual_coherence;
  out.sparsity = sparsity;
  out.signal_dimension = static_cast<int>(report.gram.cols());
  out.bound_factor = out.mu * out.mu * sparsity * std::log(static_cast<double>(out.signal_dimension));
  out.sensors_available = sensors_available;
  return out;
}

// Plan text record:
//   gridsense-plan v1
//   method greedy
//   sensors 1 2 3
//   trace 1 0.93 0.81
//   final_coherence 0.81
//   unobserved            (bus ids, may be empty)
inline void write_plan(std::ostream& out, const PlacementPlan& plan) {
  out << "gridsense-plan v1\n";
  out << "method " << detail::method_name(plan.method) << "\n";
  out << "sensors";
  for (int b : plan.chosen) out << ' ' << b;
  out << "\ntrace";
  std::ostringstream num;
  num << std::setprecision(17);
  for (double v : plan.objective_trace) num << ' ' << v;
  out << num.str() << "\n";
  num.str("");
  num << plan.final_coherence;
  out << "final_coherence " << num.str() << "\n";
  out << "unobserved";
  for (int b : plan.unobserved_buses) out << ' ' << b;
  out << "\n";
}

inline PlacementPlan read_plan(std::istream& in) {
  PlacementPlan plan;
  std::string raw;
  int lineno = 0;
  bool header = false, have_sensors = false;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = detail::strip_comment(raw);
    if (line.empty()) continue;
    if (!header) {
      if (line != "gridsense-plan v1") throw ParseError("expected header 'gridsense-plan v1'", lineno);
      header = true;
      continue;
    }
    auto tok = detail::split_ws(line);
    const auto key = tok[0];
    tok.erase(tok.begin());
    if (key == "method") {
      if (tok.size() != 1) throw ParseError("method needs one value", lineno);
      if (tok[0] == "greedy") plan.method = PlacementMethod::greedy;
      else if (tok[0] == "random") plan.method = PlacementMethod::random;
      else if (tok[0] == "file") plan.method = PlacementMethod::file;
      else throw ParseError("unknown placement method '" + tok[0] + "'", lineno);
    } else if (key == "sensors") {
      for (const auto& t : tok) plan.chosen.push_back(detail::parse_int(t, lineno));
      have_sensors = true;
    } else if (key == "trace") {
      for (const auto& t : tok) plan.objective_trace.push_back(detail::parse_number(t, lineno));
    } else if (key == "final_coherence") {
      if (tok.size() != 1) throw ParseError("final_coherence needs one value", lineno);
      plan.final_coherence = detail::parse_number(tok[0], lineno);
    } else if (key == "unobserved") {
      for (const auto& t : tok) plan.unobserved_buses.push_back(detail::parse_int(t, lineno));
    } else {
      throw ParseError("unknown plan key '" + key + "'", lineno);
    }
  }
  if (!header) throw ParseError("empty plan file", 0);
  if (!have_sensors || plan.chosen.empty()) throw ParseError("plan lists no sensors", 0);
  std::set<int> distinct(plan.chosen.begin(), plan.chosen.end());
  if (distinct.size() != plan.chosen.size()) throw ValidationError("plan lists a sensor bus twice");
  return plan;
}

}  // namespace gridsense
