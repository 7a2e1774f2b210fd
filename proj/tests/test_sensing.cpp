#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "gridsense/sensing.hpp"
#include "test_support.hpp"

using namespace gridsense;
using Eigen::MatrixXd;

namespace {

ImpedanceModel two_bus() {
  MatrixXd z(2, 2);
  z << 2, 1, 1, 1;
  return testkit::model_from_impedance(z);
}

ImpedanceModel ieee(const char* file) { return build_impedance_model(load_network(testkit::data_path(file))); }

}  // namespace

TEST(AssembleMeasurementMatrix, Examples) {
  const auto model = two_bus();
  const auto a = assemble_measurement_matrix(model, {1}, {1, 2});
  ASSERT_EQ(a.rows.rows(), 1);
  EXPECT_DOUBLE_EQ(a.rows(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(a.rows(0, 1), 1.0);
  EXPECT_TRUE(assemble_measurement_matrix(model, {1, 2}, {1, 2}).rows.isApprox(model.impedance));
  EXPECT_THROW(assemble_measurement_matrix(model, {1, 1}, {1, 2}), ValidationError);
  EXPECT_THROW(assemble_measurement_matrix(model, {3}, {1, 2}), ValidationError);
}

TEST(AssembleMeasurementMatrix, RowsFollowSensorAndCandidateOrder) {
  const auto model = ieee("ieee9.case");
  const auto a = assemble_measurement_matrix(model, {7, 2}, {9, 1, 4});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      EXPECT_EQ(a.rows(r, c), model.impedance(a.sensor_buses[r] - 1, a.candidate_buses[c] - 1));
}

TEST(GramCoherence, Examples) {
  EXPECT_DOUBLE_EQ(gram_coherence(MatrixXd::Identity(4, 4)).max_offdiag, 0.0);

  MatrixXd twins(3, 2);
  twins << 1, 1, 2, 2, 3, 3;
  EXPECT_NEAR(gram_coherence(twins).max_offdiag, 1.0, 1e-15);

  MatrixXd a(2, 2);
  a << 1, 1, 0, 1;
  const auto rep = gram_coherence(a);
  EXPECT_NEAR(rep.max_offdiag, 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(rep.max_offdiag, 0.70711, 1e-5);
  EXPECT_EQ(rep.mutual_coherence, rep.max_offdiag);
}

TEST(GramCoherence, ZeroColumnsAreReportedAndSkipped) {
  MatrixXd a(2, 3);
  a << 1, 0, 1, 0, 0, 1;
  const auto rep = gram_coherence(a);
  ASSERT_EQ(rep.zero_columns, std::vector<int>{1});
  EXPECT_NEAR(rep.max_offdiag, 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_EQ(rep.gram(1, 1), 0.0);

  MeasurementMatrix mm{a, {4, 5}, {3, 7, 9}};
  EXPECT_EQ(gram_coherence(mm).zero_columns, std::vector<int>{7});

  EXPECT_THROW(gram_coherence(MatrixXd::Zero(2, 2)), ValidationError);
  EXPECT_THROW(gram_coherence(MatrixXd(0, 0)), ValidationError);
}

TEST(GramCoherence, SymmetryUnitDiagonalAndScaleInvariance) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> scale(-5.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    MatrixXd a(3 + trial % 4, 6);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = gauss(rng);
    const auto rep = gram_coherence(a);
    EXPECT_LT((rep.gram - rep.gram.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index j = 0; j < a.cols(); ++j) EXPECT_NEAR(rep.gram(j, j), 1.0, 1e-12);
    EXPECT_GE(rep.mutual_coherence, 0.0);
    EXPECT_LE(rep.mutual_coherence, 1.0);
    double c = scale(rng);
    if (std::abs(c) < 1e-3) c = 1.0;
    const auto scaled = gram_coherence(c * a);
    EXPECT_LT((scaled.gram - rep.gram).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(scaled.max_offdiag, rep.max_offdiag, 1e-12);
  }
}

TEST(GreedyPlacement, IdentityImpedance) {
  const int m = 6;
  const auto model = testkit::model_from_impedance(MatrixXd::Identity(m, m));
  const auto two = greedy_place_sensors(model, 2);
  EXPECT_EQ(two.chosen, (std::vector<int>{1, 2}));
  EXPECT_EQ(two.objective_trace, (std::vector<double>{0.0, 0.0}));
  for (int k = 1; k <= m; ++k) EXPECT_EQ(greedy_place_sensors(model, k).final_coherence, 0.0);
  EXPECT_EQ(two.unobserved_buses, (std::vector<int>{3, 4, 5, 6}));
}

TEST(GreedyPlacement, AllCandidatesGivesFullMatrixCoherence) {
  const auto model = ieee("ieee9.case");
  const auto plan = greedy_place_sensors(model, 9);
  std::set<int> chosen(plan.chosen.begin(), plan.chosen.end());
  EXPECT_EQ(chosen.size(), 9u);
  EXPECT_NEAR(plan.final_coherence, gram_coherence(model.impedance).mutual_coherence, 1e-12);
}

TEST(GreedyPlacement, TraceMatchesAssembledMatrices) {
  std::mt19937_64 rng(5);
  std::vector<ImpedanceModel> models{ieee("ieee9.case")};
  for (int i = 0; i < 10; ++i) models.push_back(build_impedance_model(testkit::random_network(rng, 6 + i % 5)));
  for (const auto& model : models) {
    const int k = model.bus_count() - 1;
    const auto plan = greedy_place_sensors(model, k);
    ASSERT_EQ(plan.objective_trace.size(), static_cast<std::size_t>(k));
    std::set<int> distinct(plan.chosen.begin(), plan.chosen.end());
    EXPECT_EQ(distinct.size(), plan.chosen.size());
    for (int t = 1; t <= k; ++t) {
      std::vector<int> prefix(plan.chosen.begin(), plan.chosen.begin() + t);
      const auto a = assemble_measurement_matrix(model, prefix, all_buses(model.bus_count()));
      EXPECT_NEAR(plan.objective_trace[t - 1], gram_coherence(a).mutual_coherence, 1e-12);
    }
    EXPECT_EQ(plan.final_coherence, plan.objective_trace.back());
  }
}

// Each greedy step is the best single extension of the previous picks.
TEST(GreedyPlacement, EachStepIsBestExtension) {
  const auto model = ieee("ieee9.case");
  const auto plan = greedy_place_sensors(model, 7);
  for (std::size_t t = 1; t < plan.chosen.size(); ++t) {
    std::vector<int> prefix(plan.chosen.begin(), plan.chosen.begin() + t);
    for (int cand = 1; cand <= 9; ++cand) {
      if (std::find(prefix.begin(), prefix.end(), cand) != prefix.end()) continue;
      auto rows = prefix;
      rows.push_back(cand);
      const double value = gram_coherence(assemble_measurement_matrix(model, rows, all_buses(9)).rows).max_offdiag;
      EXPECT_GE(value, plan.objective_trace[t] - 1e-12) << "step " << t << " candidate " << cand;
    }
  }
}

TEST(GreedyPlacement, Ieee9MetersTheGeneratorLeaves) {
  // Buses 1, 2 and 3 hang off single transformer branches with no shunt, so
  // leaving one unmetered makes its column parallel to its neighbour's.
  const auto model = ieee("ieee9.case");
  const auto plan = greedy_place_sensors(model, 7);
  std::set<int> chosen(plan.chosen.begin(), plan.chosen.end());
  for (int leaf : {1, 2, 3}) EXPECT_TRUE(chosen.count(leaf)) << leaf;
  const std::set<int> reported{1, 2, 3, 5, 6, 7, 9};
  int overlap = 0;
  for (int b : chosen) overlap += static_cast<int>(reported.count(b));
  EXPECT_GE(overlap, 6);
  EXPECT_LT(plan.final_coherence, 1.0);
}

TEST(GreedyPlacement, CandidateOrderDoesNotMatter) {
  const auto model = ieee("ieee9.case");
  const auto base = greedy_place_sensors(model, 5, {2, 3, 4, 5, 6, 7, 8, 9});
  const auto shuffled = greedy_place_sensors(model, 5, {9, 4, 2, 8, 6, 3, 7, 5});
  EXPECT_EQ(base.chosen, shuffled.chosen);
  EXPECT_EQ(std::count(base.chosen.begin(), base.chosen.end(), 1), 0);
}

TEST(GreedyPlacement, Errors) {
  const auto model = ieee("ieee9.case");
  EXPECT_THROW(greedy_place_sensors(model, 0), ValidationError);
  EXPECT_THROW(greedy_place_sensors(model, 10), ValidationError);
  EXPECT_THROW(greedy_place_sensors(model, 3, {1, 2}), ValidationError);
  EXPECT_THROW(greedy_place_sensors(model, 1, {1, 1}), ValidationError);
  EXPECT_THROW(greedy_place_sensors(model, 1, {42}), ValidationError);
}

TEST(RandomPlacement, Basics) {
  const auto model = ieee("ieee9.case");
  const auto all = random_place_sensors(model, 9, 123);
  EXPECT_EQ(all.chosen, all_buses(9));
  const auto a = random_place_sensors(model, 5, 77);
  const auto b = random_place_sensors(model, 5, 77);
  EXPECT_EQ(a.chosen, b.chosen);
  EXPECT_EQ(a.final_coherence, b.final_coherence);
  ASSERT_EQ(a.objective_trace.size(), 1u);
  EXPECT_EQ(a.objective_trace[0], a.final_coherence);
  EXPECT_THROW(random_place_sensors(model, 0, 1), ValidationError);
  EXPECT_THROW(random_place_sensors(model, 10, 1), ValidationError);
}

TEST(RandomPlacement, GreedyBeatsMedianOverThousandSeeds) {
  const auto model = ieee("ieee9.case");
  std::vector<double> coherence;
  std::set<std::vector<int>> seen;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto plan = random_place_sensors(model, 7, seed);
    coherence.push_back(plan.final_coherence);
    seen.insert(plan.chosen);
  }
  EXPECT_EQ(seen.size(), 36u);  // every 7-of-9 subset shows up
  std::sort(coherence.begin(), coherence.end());
  const double median = 0.5 * (coherence[499] + coherence[500]);
  EXPECT_LE(greedy_place_sensors(model, 7).final_coherence, median);
}

TEST(RecoveryBound, Examples) {
  GramReport rep;
  rep.gram = MatrixXd::Identity(9, 9);
  rep.mutual_coherence = 0.0;
  EXPECT_EQ(recovery_bound_report(rep, 2, 7).bound_factor, 0.0);
  rep.mutual_coherence = 0.5;
  EXPECT_NEAR(recovery_bound_report(rep, 2, 7).bound_factor, 0.25 * 2 * std::log(9.0), 1e-12);
  EXPECT_NEAR(recovery_bound_report(rep, 2, 7).bound_factor, 1.0986, 1e-4);

  MatrixXd twins = MatrixXd::Ones(5, 100);
  const auto full = recovery_bound_report(gram_coherence(twins), 3, 5);
  EXPECT_NEAR(full.bound_factor, 3 * std::log(100.0), 1e-9);
  EXPECT_NEAR(full.bound_factor, 13.816, 1e-3);
  EXPECT_EQ(full.signal_dimension, 100);
  EXPECT_EQ(full.sensors_available, 5);
  EXPECT_THROW(recovery_bound_report(rep, 0, 7), ValidationError);
}

TEST(PlanText, RoundTripsAndRejectsJunk) {
  const auto model = ieee("ieee9.case");
  const auto plan = greedy_place_sensors(model, 7);
  std::stringstream s;
  write_plan(s, plan);
  const auto back = read_plan(s);
  EXPECT_EQ(back.chosen, plan.chosen);
  EXPECT_EQ(back.objective_trace, plan.objective_trace);
  EXPECT_EQ(back.final_coherence, plan.final_coherence);
  EXPECT_EQ(back.method, PlacementMethod::greedy);

  std::istringstream bad1("gridsense-plan v1\nsensors 1 x\n");
  EXPECT_THROW(read_plan(bad1), ParseError);
  std::istringstream bad2("gridsense-plan v1\nsensors 1 1\n");
  EXPECT_THROW(read_plan(bad2), ValidationError);
  std::istringstream bad3("plan\n");
  EXPECT_THROW(read_plan(bad3), ParseError);
  std::istringstream bad4("gridsense-plan v1\nmethod greedy\n");
  EXPECT_THROW(read_plan(bad4), ParseError);
}
