#pragma once

// Command-line front end. run_cli() is the whole program; tools/gridsense.cpp
// only forwards argv to it.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridsense/error.hpp"
#include "gridsense/harness.hpp"
#include "gridsense/network.hpp"
#include "gridsense/recon.hpp"
#include "gridsense/sensing.hpp"

namespace gridsense::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitInternal = 70;

struct Options {
  std::string case_path;
  std::vector<int> meters;
  std::vector<int> sparsity{1};
  std::vector<double> noise{0.0};
  int trials = 1000;
  std::uint64_t seed = 1;
  std::string estimator = "cs";
  std::vector<std::string> placement;
  std::string plan_path;
  std::string snapshot_path;
  std::string out_path;
  int threads = 1;
  double epsilon = -1.0;  // negative: not given
};

namespace detail {

inline std::string extension(const std::string& path) {
  const auto slash = path.find_last_of('/');
  const auto dot = path.rfind('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return {};
  return path.substr(dot);
}

inline std::string companion_path(const std::string& path, const std::string& suffix) {
  const auto ext = extension(path);
  return path.substr(0, path.size() - ext.size()) + suffix;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path);
  f << content;
  if (!f) throw Error("failed writing " + path);
}

inline std::string num(double v, const char* spec = "%.10g") { return gridsense::detail::fmt(spec, v); }

inline PlacementPlan load_plan_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open plan file " + path);
  return read_plan(in);
}

inline std::vector<Estimator> parse_estimators(const std::string& text) {
  if (text == "cs") return {Estimator::cs};
  if (text == "min-energy") return {Estimator::min_energy};
  if (text == "both") return {Estimator::cs, Estimator::min_energy};
  throw CLI::ValidationError("--estimator", "must be cs, min-energy or both");
}

struct PlacementChoice {
  PlacementMethod method;
  std::string path;
};

inline std::vector<PlacementChoice> parse_placements(const std::vector<std::string>& items) {
  std::vector<PlacementChoice> out;
  for (const auto& p : items) {
    if (p == "greedy") out.push_back({PlacementMethod::greedy, {}});
    else if (p == "random") out.push_back({PlacementMethod::random, {}});
    else if (p.rfind("file:", 0) == 0 && p.size() > 5) out.push_back({PlacementMethod::file, p.substr(5)});
    else throw CLI::ValidationError("--placement", "must be greedy, random or file:PATH");
  }
  return out;
}

inline std::vector<InjectionDevice> devices_of(const DcNetwork& net, DeviceKind kind) {
  std::vector<InjectionDevice> out;
  for (const auto& d : net.devices)
    if (d.kind == kind) out.push_back(d);
  return out;
}

inline std::string plan_text(const PlacementPlan& plan) {
  std::ostringstream s;
  write_plan(s, plan);
  return s.str();
}

inline nlohmann::json plan_json(const PlacementPlan& plan) {
  return {{"method", gridsense::detail::method_name(plan.method)},
          {"sensors", plan.chosen},
          {"trace", plan.objective_trace},
          {"final_coherence", plan.final_coherence},
          {"unobserved", plan.unobserved_buses}};
}

// Resolves --plan / --placement into a plan for a single-plan command.
inline PlacementPlan resolve_single_plan(const Options& o, const ImpedanceModel& model) {
  if (!o.plan_path.empty()) return plan_from_buses(model, load_plan_file(o.plan_path).chosen);
  const auto choices = parse_placements(o.placement.empty() ? std::vector<std::string>{"greedy"} : o.placement);
  if (choices.size() != 1) throw CLI::ValidationError("--placement", "takes a single method here");
  if (choices[0].method == PlacementMethod::file) return plan_from_buses(model, load_plan_file(choices[0].path).chosen);
  if (o.meters.size() != 1) throw CLI::ValidationError("--meters", "takes exactly one count here");
  if (choices[0].method == PlacementMethod::greedy) return greedy_place_sensors(model, o.meters[0]);
  return random_place_sensors(model, o.meters[0], o.seed);
}

inline int cmd_inspect(const Options& o, std::ostream& out) {
  const auto net = load_network(o.case_path);
  const auto model = build_impedance_model(net);
  const auto cond = condition_report(model);
  std::ostringstream s;
  s << "case " << net.id << "\n";
  s << "buses " << net.bus_count() << "\nbranches " << net.branches.size() << "\ndevices " << net.devices.size() << "\n";
  for (auto kind : {DeviceKind::current_source, DeviceKind::voltage_source, DeviceKind::constant_power,
                    DeviceKind::constant_resistance_load})
    s << "  " << to_string(kind) << ' ' << devices_of(net, kind).size() << "\n";
  s << "folded_loads";
  for (const auto& f : model.folded_loads) s << ' ' << f.bus << ':' << num(f.resistance, "%.6g");
  s << "\ncondition " << num(cond.condition, "%.6g") << (cond.warning ? "  WARNING: ill-conditioned" : "") << "\n";
  s << "z_diagonal_min " << num(cond.min_diagonal, "%.6g") << "\nz_diagonal_max " << num(cond.max_diagonal, "%.6g")
    << "\n";
  out << s.str();
  if (!o.out_path.empty()) {
    if (extension(o.out_path) == ".json") {
      nlohmann::json j{{"case", net.id},
                       {"buses", net.bus_count()},
                       {"branches", net.branches.size()},
                       {"devices", net.devices.size()},
                       {"condition", cond.condition},
                       {"condition_warning", cond.warning},
                       {"z_diagonal_min", cond.min_diagonal},
                       {"z_diagonal_max", cond.max_diagonal}};
      j["folded_loads"] = nlohmann::json::array();
      for (const auto& f : model.folded_loads) j["folded_loads"].push_back({{"bus", f.bus}, {"resistance", f.resistance}});
      write_file(o.out_path, j.dump(2) + "\n");
    } else {
      write_file(o.out_path, s.str());
    }
  }
  return kExitOk;
}

inline int cmd_place(const Options& o, std::ostream& out) {
  const auto net = load_network(o.case_path);
  const auto model = build_impedance_model(net);
  const auto plan = resolve_single_plan(o, model);
  const auto text = plan_text(plan);
  out << text;
  if (!plan.unobserved_buses.empty()) out << "# warning: some buses are invisible to every sensor\n";
  if (!o.out_path.empty())
    write_file(o.out_path, extension(o.out_path) == ".json" ? plan_json(plan).dump(2) + "\n" : text);
  return kExitOk;
}

inline int cmd_estimate(const Options& o, std::ostream& out) {
  const auto net = load_network(o.case_path);
  const auto model = build_impedance_model(net);
  if (o.snapshot_path.empty()) throw CLI::RequiredError("--snapshot");
  if (o.plan_path.empty()) throw CLI::RequiredError("--plan");
  std::ifstream snap(o.snapshot_path);
  if (!snap) throw Error("cannot open snapshot " + o.snapshot_path);
  const auto meas = read_snapshot(snap);
  const auto plan = load_plan_file(o.plan_path);
  SolverConfig cfg;
  if (o.epsilon >= 0.0) cfg.epsilon = o.epsilon;
  const auto estimators = parse_estimators(o.estimator);

  std::vector<Eigen::VectorXd> columns;
  std::vector<std::string> names;
  SparseEstimate cs_est;
  for (auto e : estimators) {
    if (e == Estimator::cs) {
      cs_est = estimate_state(model, meas, plan, cfg);
      columns.push_back(cs_est.injections);
    } else {
      // same row layout as estimate_state, solved in the minimum-norm sense
      std::vector<int> rows = plan.chosen;
      for (int b : meas.voltage_source_buses)
        if (std::find(rows.begin(), rows.end(), b) == rows.end()) rows.push_back(b);
      Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        auto it = meas.voltage_readings.find(rows[i]);
        if (it == meas.voltage_readings.end()) throw ValidationError("missing voltage reading at bus " + std::to_string(rows[i]));
        y(i) = it->second;
      }
      const auto yo = apply_current_offsets(y, model, rows, meas.known_injections);
      std::vector<int> unknown;
      for (int b = 1; b <= model.bus_count(); ++b)
        if (!meas.known_injections.count(b)) unknown.push_back(b);
      Eigen::VectorXd full = Eigen::VectorXd::Zero(model.bus_count());
      for (const auto& [b, v] : meas.known_injections) full(b - 1) = v;
      if (!unknown.empty()) {
        const auto x = min_energy(gridsense::detail::select(model.impedance, rows, unknown), yo);
        for (std::size_t c = 0; c < unknown.size(); ++c) full(unknown[c] - 1) = x(c);
      }
      columns.push_back(full);
    }
    names.push_back(to_string(e));
  }

  std::ostringstream table, csv;
  table << "bus";
  csv << "bus";
  for (const auto& n : names) {
    table << "  " << n;
    csv << ',' << n;
  }
  table << "\n";
  csv << "\n";
  for (int b = 1; b <= model.bus_count(); ++b) {
    table << b;
    csv << b;
    for (const auto& c : columns) {
      table << "  " << num(c(b - 1), "%.6f");
      csv << ',' << num(c(b - 1), "%.10g");
    }
    table << "\n";
    csv << "\n";
  }
  if (std::find(estimators.begin(), estimators.end(), Estimator::cs) != estimators.end()) {
    table << "cs residual " << num(cs_est.residual_norm, "%.3e") << "  iterations " << cs_est.iterations_used
          << "  converged " << (cs_est.converged ? "yes" : "no") << "\ncs support";
    for (int i : cs_est.support) table << ' ' << i + 1;
    table << "\n";
  }
  out << table.str();
  if (!o.out_path.empty()) {
    if (extension(o.out_path) == ".json") {
      nlohmann::json j;
      for (std::size_t k = 0; k < names.size(); ++k)
        j[names[k]] = std::vector<double>(columns[k].data(), columns[k].data() + columns[k].size());
      write_file(o.out_path, j.dump(2) + "\n");
    } else if (extension(o.out_path) == ".csv") {
      write_file(o.out_path, csv.str());
    } else {
      write_file(o.out_path, table.str());
    }
  }
  return kExitOk;
}

inline int cmd_bench(const Options& o, std::ostream& out) {
  const auto net = load_network(o.case_path);
  const auto model = build_impedance_model(net);
  if (o.trials < 1) throw CLI::ValidationError("--trials", "must be at least 1");
  if (o.threads < 1) throw CLI::ValidationError("--threads", "must be at least 1");
  const auto estimators = parse_estimators(o.estimator);
  const auto placements =
      parse_placements(o.placement.empty() ? std::vector<std::string>{"greedy", "random"} : o.placement);

  BenchmarkGrid grid;
  grid.model_id = net.id;
  grid.trials = o.trials;
  grid.seed = o.seed;
  if (o.epsilon >= 0.0) grid.epsilon = o.epsilon;
  for (const auto& d : devices_of(net, DeviceKind::current_source)) grid.known_injections[d.bus] = d.value;

  std::vector<int> meters = o.meters;
  for (const auto& p : placements) {
    if (p.method != PlacementMethod::file) continue;
    if (placements.size() != 1) throw CLI::ValidationError("--placement", "file:PATH cannot be combined with other methods");
    grid.file_plan = plan_from_buses(model, load_plan_file(p.path).chosen);
    meters = {static_cast<int>(grid.file_plan->chosen.size())};
  }
  if (meters.empty()) throw CLI::RequiredError("--meters");
  for (int s : o.sparsity)
    for (int k : meters)
      for (const auto& p : placements)
        for (auto e : estimators)
          for (double n : o.noise) grid.cells.push_back({s, k, p.method, e, n});

  const auto report = run_benchmark(model, grid, o.threads);
  write_report_table(out, report);
  if (!o.out_path.empty()) {
    std::ostringstream body;
    if (extension(o.out_path) == ".json") body << report_to_json(report).dump(2) << "\n";
    else if (extension(o.out_path) == ".csv") write_report_csv(body, report);
    else write_report_table(body, report);
    write_file(o.out_path, body.str());
    std::ostringstream plot;
    write_plot_data(plot, report);
    write_file(companion_path(o.out_path, ".plot.dat"), plot.str());
  }
  return kExitOk;
}

inline int cmd_coherence(const Options& o, std::ostream& out) {
  const auto net = load_network(o.case_path);
  const auto model = build_impedance_model(net);
  const auto plan = resolve_single_plan(o, model);
  const auto a = assemble_measurement_matrix(model, plan.chosen, all_buses(model.bus_count()));
  const auto rep = gram_coherence(a);
  if (o.sparsity.size() != 1) throw CLI::ValidationError("--sparsity", "takes a single value here");
  const auto bound = recovery_bound_report(rep, o.sparsity[0], static_cast<int>(plan.chosen.size()));
  std::ostringstream s;
  s << "sensors";
  for (int b : plan.chosen) s << ' ' << b;
  s << "\nmutual_coherence " << num(rep.mutual_coherence, "%.12f") << "\nzero_columns";
  for (int b : rep.zero_columns) s << ' ' << b;
  s << "\nbound_factor " << num(bound.bound_factor, "%.6f") << "  (mu^2 * S * ln M, S=" << bound.sparsity
    << ", M=" << bound.signal_dimension << "; compare with N=" << bound.sensors_available
    << " up to an unknown constant)\n";
  out << s.str();
  if (!o.out_path.empty()) {
    if (extension(o.out_path) == ".csv") {
      std::ostringstream g;
      for (Eigen::Index i = 0; i < rep.gram.rows(); ++i) {
        for (Eigen::Index j = 0; j < rep.gram.cols(); ++j) g << (j ? "," : "") << num(rep.gram(i, j), "%.12g");
        g << "\n";
      }
      write_file(o.out_path, g.str());
    } else if (extension(o.out_path) == ".json") {
      nlohmann::json j{{"sensors", plan.chosen},
                       {"mutual_coherence", rep.mutual_coherence},
                       {"zero_columns", rep.zero_columns},
                       {"bound_factor", bound.bound_factor},
                       {"sparsity", bound.sparsity},
                       {"signal_dimension", bound.signal_dimension}};
      write_file(o.out_path, j.dump(2) + "\n");
    } else {
      write_file(o.out_path, s.str());
    }
  }
  return kExitOk;
}

}  // namespace detail

// Builds the argument parser. Exposed so tests can walk every option.
inline std::unique_ptr<CLI::App> make_app(Options& o) {
  auto app = std::make_unique<CLI::App>("gridsense: compressive-sensing state estimation for DC microgrids",
                                        "gridsense");
  app->require_subcommand(1);

  auto add_case = [&](CLI::App* sub) {
    sub->add_option("--case", o.case_path, "Network case file (gridsense-case v1)")->required();
  };
  auto add_out = [&](CLI::App* sub, const char* what) { sub->add_option("--out", o.out_path, what); };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Random seed (default 1)"); };
  auto add_meters = [&](CLI::App* sub, const char* what) {
    sub->add_option("--meters", o.meters, what)->delimiter(',');
  };
  auto add_placement = [&](CLI::App* sub, const char* what) {
    sub->add_option("--placement", o.placement, what)->delimiter(',');
  };

  auto* inspect = app->add_subcommand("inspect", "Summarize a network and the conditioning of its impedance matrix");
  add_case(inspect);
  add_out(inspect, "Also write the summary to PATH (.json for structured output)");

  auto* place = app->add_subcommand("place", "Place voltage meters and print the placement plan");
  add_case(place);
  add_meters(place, "Number of meters K");
  add_placement(place, "greedy (default), random, or file:PATH to re-score an existing plan");
  add_seed(place);
  add_out(place, "Write the plan to PATH (plan text, or .json)");

  auto* estimate = app->add_subcommand("estimate", "Estimate injection currents for one measurement snapshot");
  add_case(estimate);
  estimate->add_option("--snapshot", o.snapshot_path, "Measurement snapshot file (gridsense-snapshot v1)")->required();
  estimate->add_option("--plan", o.plan_path, "Placement plan file (gridsense-plan v1)")->required();
  estimate->add_option("--epsilon", o.epsilon, "BPDN residual radius in p.u. (default 0)");
  estimate->add_option("--estimator", o.estimator, "cs (default), min-energy or both");
  add_out(estimate, "Write estimates to PATH (.csv bus,value series; .json; otherwise text)");

  auto* bench = app->add_subcommand("bench", "Run a Monte Carlo benchmark grid");
  add_case(bench);
  add_meters(bench, "Meter counts K[,K...]");
  bench->add_option("--sparsity", o.sparsity, "Active injection counts S[,S...] (default 1)")->delimiter(',');
  bench->add_option("--noise", o.noise, "Meter noise standard deviations in p.u. STD[,STD...] (default 0)")
      ->delimiter(',');
  bench->add_option("--trials", o.trials, "Trials per cell N (default 1000)");
  add_seed(bench);
  bench->add_option("--estimator", o.estimator, "cs (default), min-energy or both");
  add_placement(bench, "greedy, random, or file:PATH; comma list (default greedy,random)");
  bench->add_option("--epsilon", o.epsilon, "BPDN residual radius in p.u. (default noise_std*sqrt(meters))");
  bench->add_option("--threads", o.threads, "Worker threads; results do not depend on it (default 1)");
  add_out(bench, "Write the report to PATH (.csv or .json) plus PATH-stem.plot.dat series");

  auto* coherence = app->add_subcommand("coherence", "Report Gram-matrix coherence and the recovery-bound factor");
  add_case(coherence);
  coherence->add_option("--plan", o.plan_path, "Placement plan file; overrides --placement");
  add_meters(coherence, "Number of meters K when no plan is given");
  add_placement(coherence, "greedy (default), random or file:PATH");
  add_seed(coherence);
  coherence->add_option("--sparsity", o.sparsity, "Assumed sparsity S for the bound (default 1)")->delimiter(',');
  add_out(coherence, "Write the report to PATH (.csv writes the Gram matrix, .json)");

  return app;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  auto app = make_app(o);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app->parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o_stream, e_stream;
    const int code = app->exit(e, o_stream, e_stream);
    out << o_stream.str();
    err << e_stream.str();
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    const auto* sub = app->get_subcommands().front();
    const auto name = sub->get_name();
    if (name == "inspect") return detail::cmd_inspect(o, out);
    if (name == "place") return detail::cmd_place(o, out);
    if (name == "estimate") return detail::cmd_estimate(o, out);
    if (name == "bench") return detail::cmd_bench(o, out);
    if (name == "coherence") return detail::cmd_coherence(o, out);
    err << "unknown subcommand " << name << "\n";
    return kExitUsage;
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const gridsense::Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace gridsense::cli
