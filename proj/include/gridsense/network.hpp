#pragma once

// DC network model: case-file ingestion, nodal conductance assembly,
// constant-resistance load folding and inversion to the bus impedance matrix.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridsense/error.hpp"

namespace gridsense {

struct Bus {
  int id = 0;
  std::string name;
  std::optional<double> shunt_resistance;
};

struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double resistance = 0.0;
};

enum class DeviceKind { current_source, voltage_source, constant_power, constant_resistance_load };

struct InjectionDevice {
  int bus = 0;
  DeviceKind kind = DeviceKind::current_source;
  double value = 0.0;
};

inline std::string_view to_string(DeviceKind kind) {
  switch (kind) {
    case DeviceKind::current_source: return "current_source";
    case DeviceKind::voltage_source: return "voltage_source";
    case DeviceKind::constant_power: return "constant_power";
    case DeviceKind::constant_resistance_load: return "constant_resistance_load";
  }
  return "unknown";
}

inline std::optional<DeviceKind> parse_device_kind(std::string_view text) {
  for (auto kind : {DeviceKind::current_source, DeviceKind::voltage_source, DeviceKind::constant_power,
                    DeviceKind::constant_resistance_load}) {
    if (text == to_string(kind)) return kind;
  }
  return std::nullopt;
}

struct DcNetwork {
  std::string id;             // free-form label, taken from the file name when loaded from disk
  std::vector<Bus> buses;     // sorted, ids 1..M
  std::vector<Branch> branches;
  std::vector<InjectionDevice> devices;

  int bus_count() const { return static_cast<int>(buses.size()); }
  bool has_bus(int id) const { return id >= 1 && id <= bus_count(); }
};

struct FoldedLoad {
  int bus = 0;
  double resistance = 0.0;
};

struct ImpedanceModel {
  Eigen::MatrixXd conductance;  // G, loads already folded
  Eigen::MatrixXd impedance;    // Z = G^-1
  std::vector<FoldedLoad> folded_loads;
  double condition_estimate = 1.0;

  int bus_count() const { return static_cast<int>(impedance.rows()); }
  bool has_bus(int id) const { return id >= 1 && id <= bus_count(); }
};

struct ConditionReport {
  double condition = 1.0;
  double min_diagonal = 0.0;
  double max_diagonal = 0.0;
  bool warning = false;
};

inline constexpr double kDefaultConditionCeiling = 1e8;

namespace detail {

inline std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  std::string out = pos == std::string::npos ? line : line.substr(0, pos);
  auto first = out.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  auto last = out.find_last_not_of(" \t\r");
  return out.substr(first, last - first + 1);
}

inline double parse_number(const std::string& token, int line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    throw ParseError("expected a number, got '" + token + "'", line);
  }
  if (used != token.size() || !std::isfinite(value)) throw ParseError("expected a number, got '" + token + "'", line);
  return value;
}

inline int parse_int(const std::string& token, int line) {
  std::size_t used = 0;
  long value = 0;
  try {
    value = std::stol(token, &used);
  } catch (const std::exception&) {
    throw ParseError("expected an integer, got '" + token + "'", line);
  }
  if (used != token.size() || value < std::numeric_limits<int>::min() || value > std::numeric_limits<int>::max())
    throw ParseError("expected an integer, got '" + token + "'", line);
  return static_cast<int>(value);
}

inline std::vector<std::string> split_ws(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  for (std::string t; in >> t;) tokens.push_back(t);
  return tokens;
}

}  // namespace detail

// Checks every DcNetwork invariant; throws ValidationError on the first
// violation. Buses are sorted by id as a side effect.
inline void validate_network(DcNetwork& net) {
  if (net.buses.empty()) throw ValidationError("network has no buses");
  std::sort(net.buses.begin(), net.buses.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    const auto& bus = net.buses[i];
    if (i > 0 && bus.id == net.buses[i - 1].id) throw ValidationError("duplicate bus id " + std::to_string(bus.id));
    if (bus.id != static_cast<int>(i) + 1)
      throw ValidationError("bus ids must be contiguous 1..M; missing id " + std::to_string(i + 1));
    if (bus.shunt_resistance && !(*bus.shunt_resistance > 0.0))
      throw ValidationError("bus " + std::to_string(bus.id) + " has non-positive shunt resistance");
  }
  const int m = net.bus_count();
  for (const auto& br : net.branches) {
    if (!net.has_bus(br.from_bus) || !net.has_bus(br.to_bus))
      throw ValidationError("branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                            " references an unknown bus");
    if (br.from_bus == br.to_bus) throw ValidationError("branch loops on bus " + std::to_string(br.from_bus));
    if (!(br.resistance > 0.0))
      throw ValidationError("branch " + std::to_string(br.from_bus) + "-" + std::to_string(br.to_bus) +
                            " has non-positive resistance");
  }
  std::vector<int> voltage_sources(m + 1, 0);
  bool has_shunt_path = std::any_of(net.buses.begin(), net.buses.end(),
                                    [](const Bus& b) { return b.shunt_resistance.has_value(); });
  for (const auto& dev : net.devices) {
    if (!net.has_bus(dev.bus)) throw ValidationError("device references unknown bus " + std::to_string(dev.bus));
    if (!std::isfinite(dev.value)) throw ValidationError("device value is not finite");
    if (dev.kind == DeviceKind::constant_resistance_load) {
      if (!(dev.value > 0.0))
        throw ValidationError("constant_resistance_load at bus " + std::to_string(dev.bus) +
                              " has non-positive resistance");
      has_shunt_path = true;
    }
    if (dev.kind == DeviceKind::voltage_source && ++voltage_sources[dev.bus] > 1)
      throw ValidationError("more than one voltage_source at bus " + std::to_string(dev.bus));
  }

  // connectivity by union-find
  std::vector<int> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& br : net.branches) parent[find(br.from_bus - 1)] = find(br.to_bus - 1);
  for (int i = 1; i < m; ++i) {
    if (find(i) != find(0)) throw ValidationError("network is disconnected (bus " + std::to_string(i + 1) + ")");
  }
  if (!has_shunt_path)
    throw ValidationError("network has no shunt path (bus shunt or constant_resistance_load); G is singular");
}

// Parses the `gridsense-case v1` text format and validates the result.
inline DcNetwork load_network(std::istream& in, std::string id = {}) {
  DcNetwork net;
  net.id = std::move(id);
  enum class Section { none, buses, branches, devices } section = Section::none;
  bool header_seen = false;
  double resistance_scale = 1.0;  // divides every resistance (ohm -> p.u.)
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = detail::strip_comment(raw);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "gridsense-case v1") throw ParseError("expected header 'gridsense-case v1'", lineno);
      header_seen = true;
      continue;
    }
    if (line.front() == '[') {
      if (line == "[buses]") section = Section::buses;
      else if (line == "[branches]") section = Section::branches;
      else if (line == "[devices]") section = Section::devices;
      else throw ParseError("unknown section " + line, lineno);
      continue;
    }
    const auto tok = detail::split_ws(line);
    if (section == Section::none) {
      if (tok[0] != "units") throw ParseError("unexpected '" + tok[0] + "' before the first section", lineno);
      if (tok.size() == 2 && tok[1] == "pu") {
        resistance_scale = 1.0;
      } else if (tok.size() == 3 && tok[1] == "ohm") {
        resistance_scale = detail::parse_number(tok[2], lineno);
        if (!(resistance_scale > 0.0)) throw ParseError("ohm base must be positive", lineno);
      } else {
        throw ParseError("units must be 'pu' or 'ohm <base_ohm>'", lineno);
      }
      continue;
    }
    switch (section) {
      case Section::buses: {
        if (tok.size() < 2 || tok.size() > 3) throw ParseError("bus line needs: id name [shunt_resistance]", lineno);
        Bus bus{detail::parse_int(tok[0], lineno), tok[1], std::nullopt};
        if (tok.size() == 3) bus.shunt_resistance = detail::parse_number(tok[2], lineno) / resistance_scale;
        net.buses.push_back(std::move(bus));
        break;
      }
      case Section::branches: {
        if (tok.size() != 3) throw ParseError("branch line needs: from to resistance", lineno);
        net.branches.push_back({detail::parse_int(tok[0], lineno), detail::parse_int(tok[1], lineno),
                                detail::parse_number(tok[2], lineno) / resistance_scale});
        break;
      }
      case Section::devices: {
        if (tok.size() != 3) throw ParseError("device line needs: bus kind value", lineno);
        auto kind = parse_device_kind(tok[1]);
        if (!kind) throw ParseError("unknown device kind '" + tok[1] + "'", lineno);
        double value = detail::parse_number(tok[2], lineno);
        if (*kind == DeviceKind::constant_resistance_load) value /= resistance_scale;
        net.devices.push_back({detail::parse_int(tok[0], lineno), *kind, value});
        break;
      }
      case Section::none: break;
    }
  }
  if (!header_seen) throw ParseError("empty case file", 0);
  validate_network(net);
  return net;
}

inline DcNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open case file " + path);
  auto slash = path.find_last_of('/');
  std::string stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
  if (auto dot = stem.rfind('.'); dot != std::string::npos) stem.resize(dot);
  return load_network(in, stem);
}

// Nodal conductance matrix from branches and bus shunts only; loads are
// folded separately.
inline Eigen::MatrixXd build_conductance_matrix(const DcNetwork& net) {
  const int m = net.bus_count();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
  for (const auto& br : net.branches) {
    const int i = br.from_bus - 1, j = br.to_bus - 1;
    const double y = 1.0 / br.resistance;
    g(i, i) += y;
    g(j, j) += y;
    g(i, j) -= y;
    g(j, i) -= y;
  }
  for (const auto& bus : net.buses) {
    if (bus.shunt_resistance) g(bus.id - 1, bus.id - 1) += 1.0 / *bus.shunt_resistance;
  }
  return g;
}

struct FoldResult {
  Eigen::MatrixXd conductance;
  std::vector<FoldedLoad> folded;
};

inline FoldResult fold_constant_resistance_loads(const Eigen::MatrixXd& g, const DcNetwork& net) {
  FoldResult out{g, {}};
  for (const auto& dev : net.devices) {
    if (dev.kind != DeviceKind::constant_resistance_load) continue;
    if (!(dev.value > 0.0))
      throw ValidationError("constant_resistance_load at bus " + std::to_string(dev.bus) +
                            " has non-positive resistance");
    if (dev.bus < 1 || dev.bus > g.rows()) throw ValidationError("load references unknown bus");
    out.conductance(dev.bus - 1, dev.bus - 1) += 1.0 / dev.value;
    out.folded.push_back({dev.bus, dev.value});
  }
  return out;
}

// 2-norm condition number of a symmetric matrix. Returns +inf when singular.
inline double symmetric_condition(const Eigen::MatrixXd& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd mags = eig.eigenvalues().cwiseAbs();
  const double hi = mags.maxCoeff(), lo = mags.minCoeff();
  if (!(lo > hi * std::numeric_limits<double>::epsilon())) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline ImpedanceModel invert_to_impedance(const Eigen::MatrixXd& g, std::vector<FoldedLoad> folded = {},
                                          double condition_ceiling = kDefaultConditionCeiling) {
  if (g.rows() == 0 || g.rows() != g.cols()) throw ValidationError("conductance matrix must be square and non-empty");
  if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff()))
    throw ValidationError("conductance matrix is not symmetric");
  ImpedanceModel model;
  model.condition_estimate = symmetric_condition(g);
  if (!(model.condition_estimate <= condition_ceiling)) {
    std::ostringstream msg;
    msg << "conductance matrix is singular or ill-conditioned (condition " << model.condition_estimate
        << " exceeds ceiling " << condition_ceiling << ")";
    throw NumericalError(msg.str());
  }
  const auto n = g.rows();
  model.impedance = g.partialPivLu().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd err = model.impedance * g - Eigen::MatrixXd::Identity(n, n);
  // relative to ||I||_inf = 1
  if (!(err.rowwise().lpNorm<1>().maxCoeff() < 1e-8))
    throw NumericalError("impedance inverse failed the Z*G = I check; G is numerically singular");
  model.impedance = 0.5 * (model.impedance + model.impedance.transpose()).eval();
  model.conductance = g;
  model.folded_loads = std::move(folded);
  return model;
}

inline ImpedanceModel build_impedance_model(const DcNetwork& net,
                                            double condition_ceiling = kDefaultConditionCeiling) {
  auto folded = fold_constant_resistance_loads(build_conductance_matrix(net), net);
  return invert_to_impedance(folded.conductance, std::move(folded.folded), condition_ceiling);
}

inline ConditionReport condition_report(const ImpedanceModel& model, double threshold = kDefaultConditionCeiling) {
  ConditionReport rep;
  rep.condition = model.condition_estimate;
  rep.min_diagonal = model.impedance.diagonal().minCoeff();
  rep.max_diagonal = model.impedance.diagonal().maxCoeff();
  rep.warning = !(rep.condition <= threshold);
  return rep;
}

}  // namespace gridsense
