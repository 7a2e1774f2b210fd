#pragma once

// Generators shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "gridsense/network.hpp"
#include "gridsense/recon.hpp"

namespace gridsense::testkit {

inline std::string data_path(const std::string& file) { return std::string(GRIDSENSE_DATA_DIR) + "/" + file; }

// Random connected network: a random spanning tree plus a few extra
// branches, one bus shunt and an occasional constant-resistance load.
inline DcNetwork random_network(std::mt19937_64& rng, int m) {
  std::uniform_real_distribution<double> res(0.05, 2.0);
  DcNetwork net;
  for (int i = 1; i <= m; ++i) net.buses.push_back({i, "b" + std::to_string(i), std::nullopt});
  for (int i = 2; i <= m; ++i) {
    std::uniform_int_distribution<int> parent(1, i - 1);
    net.branches.push_back({parent(rng), i, res(rng)});
  }
  std::uniform_int_distribution<int> any(1, m);
  for (int extra = 0; extra < m / 2; ++extra) {
    const int a = any(rng), b = any(rng);
    if (a != b) net.branches.push_back({a, b, res(rng)});
  }
  net.buses[any(rng) - 1].shunt_resistance = res(rng);
  if (std::bernoulli_distribution(0.7)(rng))
    net.devices.push_back({any(rng), DeviceKind::constant_resistance_load, res(rng)});
  validate_network(net);
  return net;
}

inline std::string to_case_text(const DcNetwork& net) {
  std::ostringstream s;
  s.precision(17);
  s << "gridsense-case v1\nunits pu\n[buses]\n";
  for (const auto& b : net.buses) {
    s << b.id << ' ' << b.name;
    if (b.shunt_resistance) s << ' ' << *b.shunt_resistance;
    s << '\n';
  }
  s << "[branches]\n";
  for (const auto& br : net.branches) s << br.from_bus << ' ' << br.to_bus << ' ' << br.resistance << '\n';
  s << "[devices]\n";
  for (const auto& d : net.devices) s << d.bus << ' ' << to_string(d.kind) << ' ' << d.value << '\n';
  return s.str();
}

// Model with a prescribed impedance matrix, for tests written in terms of Z.
inline ImpedanceModel model_from_impedance(const Eigen::MatrixXd& z) {
  ImpedanceModel m;
  m.impedance = z;
  m.conductance = z.inverse();
  m.condition_estimate = 1.0;
  return m;
}

// Gaussian N x M matrix whose columns are redrawn until every pair has
// |cosine| < mu_max. Exact rejection on the whole matrix is far too rare to
// be usable for 6 x 12 at mu_max = 0.6.
inline Eigen::MatrixXd incoherent_gaussian(std::mt19937_64& rng, int n, int m, double mu_max) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd a(n, m);
  for (int j = 0; j < m; ++j) {
    while (true) {
      Eigen::VectorXd c(n);
      for (int i = 0; i < n; ++i) c(i) = gauss(rng);
      bool ok = true;
      for (int q = 0; q < j && ok; ++q) ok = std::abs(c.normalized().dot(a.col(q).normalized())) < mu_max;
      if (ok) {
        a.col(j) = c;
        break;
      }
    }
  }
  return a;
}

// s non-zeros at random positions, magnitudes in [0.5, 1.5], random signs.
inline Eigen::VectorXd sparse_vector(std::mt19937_64& rng, int m, int s) {
  std::vector<int> idx(m);
  for (int i = 0; i < m; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < s; ++k) x(idx[k]) = (std::bernoulli_distribution(0.5)(rng) ? 1.0 : -1.0) * mag(rng);
  return x;
}

// l1 norm with column-norm weights, the objective BPDN minimizes.
inline double weighted_l1(const Eigen::MatrixXd& a, const Eigen::VectorXd& x) {
  return x.cwiseAbs().dot(a.colwise().norm().transpose());
}

// Central differences of P_i(I) = (Z_i . I) I_i.
inline Eigen::MatrixXd fd_power_rows(const Eigen::MatrixXd& z, const Eigen::VectorXd& current,
                                     const std::vector<int>& power_buses, double h = 1e-6) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(power_buses.size()), z.cols());
  for (std::size_t r = 0; r < power_buses.size(); ++r) {
    const int i = power_buses[r] - 1;
    auto p = [&](const Eigen::VectorXd& c) { return z.row(i).dot(c) * c(i); };
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      Eigen::VectorXd up = current, down = current;
      up(j) += h;
      down(j) -= h;
      out(r, j) = (p(up) - p(down)) / (2.0 * h);
    }
  }
  return out;
}

}  // namespace gridsense::testkit
