#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "atomflow/errors.hpp"
#include "atomflow/geometry.hpp"
#include "atomflow/sampler.hpp"
#include "oracles.hpp"
#include "toy_systems.hpp"

namespace atomflow {
namespace {

constexpr int kTypes = 100;

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::IoError;
}

TEST(Schedule, GridAndValidation) {
  SampleSchedule s;
  s.num_steps = 4;
  EXPECT_EQ(s.grid(), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  s.time_grid = {0.0, 0.5, 0.4, 0.9, 1.0};
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::ConfigError);
  s.time_grid = {0.0, 0.1, 0.5, 0.9, 1.0};
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.grid(), s.time_grid);
  s.gamma = -1.0;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::ConfigError);
  s.gamma = 0.01;
  s.score_cutoff = 0.0;
  EXPECT_EQ(kind_of([&] { s.validate(); }), ErrorKind::ConfigError);
}

TEST(Schedule, NoiseScaleAndGammaOverride) {
  SampleSchedule s;
  EXPECT_DOUBLE_EQ(s.g(0.0), 100.0);
  EXPECT_DOUBLE_EQ(s.g(0.5), 1.0 / 0.51);
  EXPECT_EQ(s.g(s.score_cutoff), 0.0);
  s.score_cutoff = 1.0;
  EXPECT_DOUBLE_EQ(s.g(0.99), 1.0);
  s.score_enabled = false;
  EXPECT_EQ(s.g(0.3), 0.0);
  s.gamma_cart = 50.0;
  EXPECT_EQ(s.gamma_for(Modality::Cart), 50.0);
  EXPECT_EQ(s.gamma_for(Modality::Frac), 0.01);
}

TEST(InitNoise, DomainMaskAndMoments) {
  RngStream rng(1);
  const FlowState mol = init_noise(DomainClass::Molecule, 5, kTypes, rng);
  EXPECT_TRUE(mol.noisy_cart);
  EXPECT_FALSE(mol.noisy_frac || mol.noisy_lengths || mol.noisy_angles);
  const FlowState mat = init_noise(DomainClass::Material, 5, kTypes, rng);
  EXPECT_FALSE(mat.noisy_cart);
  EXPECT_TRUE(mat.noisy_frac && mat.noisy_lengths && mat.noisy_angles);

  double sum = 0.0, sq = 0.0;
  std::int64_t count = 0;
  std::vector<std::int64_t> freq(kTypes, 0);
  while (count < 1000000) {
    const FlowState s = init_noise(DomainClass::Material, 10, kTypes, rng);
    for (Eigen::Index i = 0; i < s.noisy_frac->size(); ++i) {
      const double x = s.noisy_frac->data()[i];
      sum += x;
      sq += x * x;
    }
    for (int i = 0; i < 3; ++i) {
      for (double x : {(*s.noisy_lengths)[i], (*s.noisy_angles)[i]}) {
        sum += x;
        sq += x * x;
      }
    }
    count += 36;
    for (int a : s.noisy_types) ++freq[static_cast<std::size_t>(a)];
  }
  const double mean = sum / static_cast<double>(count);
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sq / static_cast<double>(count) - mean * mean, 1.0, 0.01);

  std::int64_t draws = 0;
  for (auto f : freq) draws += f;
  const double p = 1.0 / kTypes;
  const double sigma = std::sqrt(static_cast<double>(draws) * p * (1.0 - p));
  for (auto f : freq) EXPECT_LT(std::abs(static_cast<double>(f) - static_cast<double>(draws) * p), 4.0 * sigma);
}

TEST(DiscreteStep, HandDerivedTransitionRow) {
  const std::vector<int> a = {0};
  Eigen::MatrixXd probs(1, 3);
  probs << 0.5, 0.3, 0.2;
  const Eigen::MatrixXd rows = transition_probabilities(a, probs, 0.5, 0.1);
  EXPECT_NEAR(rows(0, 0), 0.9, 1e-12);
  EXPECT_NEAR(rows(0, 1), 0.06, 1e-12);
  EXPECT_NEAR(rows(0, 2), 0.04, 1e-12);
}

TEST(DiscreteStep, OneHotAtCurrentTypeNeverMoves) {
  const std::vector<int> a = {2, 1};
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(2, 4);
  probs(0, 2) = 1.0;
  probs(1, 1) = 1.0;
  RngStream rng(2);
  for (double t : {0.0, 0.3, 0.9}) {
    Eigen::MatrixXd rows;
    EXPECT_EQ(discrete_flow_step(a, probs, t, 0.1, rng, &rows), a);
    EXPECT_EQ(rows, probs);
  }
}

TEST(DiscreteStep, FinalUniformStepTransfersAllMass) {
  const std::vector<int> a = {0, 1, 2};
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(3, 5);
  probs.col(4).setOnes();
  RngStream rng(3);
  for (int rep = 0; rep < 100; ++rep) EXPECT_EQ(discrete_flow_step(a, probs, 0.99, 0.01, rng), std::vector<int>(3, 4));
}

TEST(DiscreteStep, RowsStayProbabilityVectorsUnderOvershoot) {
  RngStream rng(4);
  int clamped = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<int> a(3);
    for (int& x : a) x = static_cast<int>(rng.next_u64() % 6);
    const double t = 0.95 * rng.uniform();
    const double dt = 2.0 * (1.0 - t) * rng.uniform() + 1e-6;  // dt/(1-t) up to 2
    Eigen::MatrixXd probs = Eigen::MatrixXd::NullaryExpr(3, 6, [&] { return rng.uniform() + 1e-3; });
    for (Eigen::Index r = 0; r < 3; ++r) probs.row(r) /= probs.row(r).sum();
    Eigen::MatrixXd rows;
    discrete_flow_step(a, probs, t, dt, rng, &rows);
    ASSERT_GE(rows.minCoeff(), 0.0);
    ASSERT_LE(rows.maxCoeff(), 1.0);
    for (Eigen::Index r = 0; r < 3; ++r) ASSERT_NEAR(rows.row(r).sum(), 1.0, 1e-9);
    clamped += dt / (1.0 - t) > 1.0;
  }
  EXPECT_GT(clamped, 0);
}

TEST(DiscreteStep, RejectsTerminalTime) {
  const std::vector<int> a = {0};
  const Eigen::MatrixXd probs = Eigen::MatrixXd::Constant(1, 2, 0.5);
  RngStream rng(5);
  EXPECT_EQ(kind_of([&] { discrete_flow_step(a, probs, 1.0, 0.1, rng); }), ErrorKind::TimeOutOfRange);
}

TEST(EuclideanStep, DeterministicRecursionArrivesExactly) {
  RngStream rng(6);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 1);
  const Eigen::MatrixXd target = Eigen::MatrixXd::Ones(1, 1);
  const std::vector<double> expected = {0.25, 0.5, 0.75, 1.0};
  for (int k = 0; k < 4; ++k) {
    z = euclidean_step(z, target, 0.25 * k, 0.25, 0.0, nullptr, rng);
    EXPECT_DOUBLE_EQ(z(0, 0), expected[static_cast<std::size_t>(k)]);
  }
  const Eigen::MatrixXd fixed = Eigen::MatrixXd::Constant(2, 3, 0.7);
  EXPECT_EQ(euclidean_step(fixed, fixed, 0.4, 0.1, 0.0, nullptr, rng), fixed);
}

TEST(EuclideanStep, ScoreTermHandExample) {
  RngStream rng(7);
  const auto g = [](double t) { return 1.0 / (t + 0.01); };
  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 1), pred = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const double dz = euclidean_step(z, pred, 0.5, 0.1, 0.0, g, rng)(0, 0);
  EXPECT_NEAR(dz, (4.0 + 2.0 / 0.51 / 0.5) * 0.1, 1e-12);
  EXPECT_NEAR(dz, 1.18431, 1e-5);
  EXPECT_EQ(kind_of([&] { euclidean_step(z, pred, 1.0, 0.1, 0.0, g, rng); }), ErrorKind::TimeOutOfRange);
  EXPECT_EQ(kind_of([&] { euclidean_step(z, Eigen::MatrixXd::Zero(2, 1), 0.5, 0.1, 0.0, g, rng); }),
            ErrorKind::ShapeError);
}

TEST(EuclideanStep, NoiseVarianceMatchesChurn) {
  RngStream rng(8);
  const auto g = [](double) { return 2.0; };
  const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 1);
  double sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double dz = euclidean_step(z, z, 0.0, 1.0, 0.5, g, rng)(0, 0);
    sq += dz * dz;
  }
  EXPECT_NEAR(sq / n, 2.0 * 0.5 * 2.0, 0.03);
}

void expect_oracle_arrival(const AtomicSystem& system, int steps, const SampleSchedule& base) {
  const FlowState target = make_endpoints(system, AtomVocab{kTypes});
  const testing::EndpointOracle oracle(target, kTypes);
  SampleRequest req;
  req.domain = system.domain;
  req.num_atoms = system.num_atoms();
  req.batch_size = 3;
  req.schedule = base;
  req.schedule.num_steps = steps;
  GenerateOptions opts;
  opts.keep_trajectories = true;
  const auto res = generate(oracle, req, nullptr, opts);
  ASSERT_TRUE(res.failures.empty()) << res.failures.front();
  for (const auto& traj : res.trajectories) {
    ASSERT_EQ(traj.size(), static_cast<std::size_t>(steps + 1));
    const FlowState& last = traj.back();
    EXPECT_EQ(last.noisy_types, target.target_types);
    if (target.target_cart) EXPECT_LT((*last.noisy_cart - *target.target_cart).cwiseAbs().maxCoeff(), 1e-5);
    if (target.target_frac) {
      EXPECT_LT((*last.noisy_frac - *target.target_frac).cwiseAbs().maxCoeff(), 1e-5);
      EXPECT_LT((*last.noisy_lengths - *target.target_lengths).cwiseAbs().maxCoeff(), 1e-5);
      EXPECT_LT((*last.noisy_angles - *target.target_angles).cwiseAbs().maxCoeff(), 1e-5);
    }
    for (const auto& s : traj)
      if (system.domain == DomainClass::Molecule) EXPECT_FALSE(s.noisy_frac || s.noisy_lengths || s.noisy_angles);
  }
}

TEST(Generate, OracleArrivesForEveryGrid) {
  SampleSchedule deterministic;
  deterministic.gamma = 0.0;
  deterministic.score_enabled = false;
  for (int steps : {4, 10, 100})
    for (const auto& s : testing::toy_systems()) expect_oracle_arrival(s, steps, deterministic);
}

TEST(Generate, OracleArrivesWithDefaultStochasticSchedule) {
  for (const auto& s : testing::toy_systems()) expect_oracle_arrival(s, 100, SampleSchedule{});
}

TEST(Generate, MaterialDecodeContract) {
  const FlowState target = make_endpoints(testing::toy_materials()[3], AtomVocab{kTypes});
  const testing::EndpointOracle oracle(target, kTypes);
  SampleRequest req;
  req.domain = DomainClass::Material;
  req.num_atoms = 8;
  req.batch_size = 4;
  req.schedule.num_steps = 20;
  const auto res = generate(oracle, req);
  ASSERT_EQ(res.systems.size(), 4u);
  for (const auto& s : res.systems) {
    EXPECT_EQ(s.num_atoms(), 8);
    EXPECT_GE(s.frac_coords->minCoeff(), 0.0);
    EXPECT_LT(s.frac_coords->maxCoeff(), 1.0);
    for (int i = 0; i < 3; ++i) {
      EXPECT_GE((*s.lattice_angles)[i], 60.0);
      EXPECT_LE((*s.lattice_angles)[i], 120.0);
    }
  }
}

TEST(Generate, MismatchedAtomCountFailsPerSample) {
  const FlowState target = make_endpoints(testing::toy_materials()[3], AtomVocab{kTypes});
  const testing::EndpointOracle oracle(target, kTypes);
  SampleRequest req;
  req.domain = DomainClass::Material;
  req.batch_size = 2;
  req.schedule.num_steps = 5;
  const auto res = generate(oracle, req);
  EXPECT_TRUE(res.systems.empty());
  EXPECT_EQ(res.failures.size(), 2u);
}

TEST(Generate, SeedDeterminism) {
  const FlowState target = make_endpoints(testing::toy_molecules()[3], AtomVocab{kTypes});
  const testing::EndpointOracle oracle(target, kTypes, 2.0);
  SampleRequest req;
  req.num_atoms = target.num_atoms();
  req.batch_size = 3;
  req.schedule.num_steps = 30;
  req.schedule.gamma = 0.5;
  req.schedule.seed = 17;
  const auto a = generate(oracle, req), b = generate(oracle, req);
  ASSERT_EQ(a.systems.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.systems[i].atomic_numbers, b.systems[i].atomic_numbers);
    EXPECT_EQ(*a.systems[i].cart_coords, *b.systems[i].cart_coords);
  }
  req.schedule.seed = 18;
  const auto c = generate(oracle, req);
  EXPECT_NE(c.systems[0].atomic_numbers, a.systems[0].atomic_numbers);
}

TEST(Histogram, CountsAndDraws) {
  const auto systems = testing::toy_systems();
  AtomCountHistogram h(systems);
  EXPECT_EQ(h.counts(DomainClass::Molecule).size(), 4u);
  EXPECT_EQ(kind_of([&] { h.add(DomainClass::Molecule, 0); }), ErrorKind::RangeError);
  EXPECT_EQ(kind_of([&] { h.add(DomainClass::Molecule, 3, 0); }), ErrorKind::RangeError);
  AtomCountHistogram one;
  EXPECT_TRUE(one.empty(DomainClass::Material));
  one.add(DomainClass::Material, 6, 3);
  one.add(DomainClass::Material, 2, 1);
  RngStream rng(9);
  int sixes = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) sixes += one.draw(DomainClass::Material, rng) == 6;
  EXPECT_NEAR(static_cast<double>(sixes) / n, 0.75, 4.0 * std::sqrt(0.75 * 0.25 / n));
  EXPECT_EQ(kind_of([&] { one.draw(DomainClass::Molecule, rng); }), ErrorKind::EmptyInput);
}

}  // namespace
}  // namespace atomflow
