#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ehsrb/eht.hpp"

using namespace ehsrb;

TEST(Pliss, ConstantAboveThresholdGivesEveryIndex) {
  const std::vector<double> a(50, 1.1);
  const EhtResult r = pliss_times(a, 0.1);
  ASSERT_EQ(r.indices.size(), 50u);
  for (long i = 0; i < 50; ++i) EXPECT_EQ(r.indices[i], i + 1);
}

TEST(Pliss, ZeroSequenceGivesNothing) {
  EXPECT_TRUE(pliss_times(std::vector<double>(40, 0.0), 0.1).indices.empty());
}

TEST(Pliss, AlternatingMatchesBruteForce) {
  // c = 1/4 keeps every partial sum exact, so the ties at n odd are real ties
  const double c = 0.25;
  std::vector<double> a;
  for (int i = 0; i < 101; ++i) a.push_back(i % 2 == 0 ? 2 * c : 0.0);
  EXPECT_EQ(pliss_times(a, c).indices, pliss_times_bruteforce(a, c).indices);
  EXPECT_FALSE(pliss_times(a, c).indices.empty());
}

TEST(Pliss, RandomSequencesMatchBruteForce) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> len(1, 200);
  std::normal_distribution<double> g(0.1, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(static_cast<std::size_t>(len(rng)));
    for (double& x : a) x = g(rng);
    EXPECT_EQ(pliss_times(a, 0.05).indices, pliss_times_bruteforce(a, 0.05).indices);
  }
}

TEST(Pliss, TiesAreHandledExactly) {
  // integer-valued sums hit the threshold exactly
  const std::vector<double> a{1, 0, 1, 0, 0, 2, 0, 1};
  EXPECT_EQ(pliss_times(a, 0.5).indices, pliss_times_bruteforce(a, 0.5).indices);
}

TEST(OrbitLog, FixedPointSingleRecordOfZeros) {
  const System sys = build_system(SystemSpec{});
  const ConeField field(sys);
  const OrbitLog log = orbit_log(field, sys.fixed_point(), 1);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_NEAR(log.lambda_u[0], 0.0, 1e-12);
  EXPECT_NEAR(log.lambda_s[0], 0.0, 1e-12);
  EXPECT_NEAR(log.lambda[0], 0.0, 1e-12);
}

TEST(OrbitLog, BaseSolenoidExpandsByLog2) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const ConeField field(sys);
  const OrbitLog log = orbit_log(field, make_vec({1.0, 0.1, 0.05}), 100);
  // a boundary ray (1, tan w) loses at most a factor cos w against e_theta
  const double slack = -std::log(std::cos(field.spec().half_angle));
  for (std::size_t k = 0; k < log.size(); ++k) {
    const Mat D = sys.jacobian(log.positions[k]);
    EXPECT_GT(log.lambda_u[k], std::log(2.0) - slack - 1e-9) << k;
    EXPECT_LE(log.lambda_u[k], std::log((D * sys.unstable_reference()).norm()) + 1e-9) << k;
  }
}

TEST(OrbitLog, RatesDropNearZeroInsideY) {
  const System sys = build_system(SystemSpec{});
  const ConeField field(sys);
  const Vec z = sys.from_local(make_vec({0.001, 0.01, 0.0}));
  const OrbitLog log = orbit_log(field, z, 400);
  double inside_max = 0;
  bool recovered = false;
  for (std::size_t k = 0; k < log.size(); ++k) {
    if (sys.local_norm(log.positions[k]) < 0.5 * sys.spec().r0)
      inside_max = std::max(inside_max, std::abs(log.lambda_u[k]));
    if (!log.in_z[k] && log.lambda_u[k] > 0.5) recovered = true;
  }
  EXPECT_LT(inside_max, 0.2);
  EXPECT_TRUE(recovered);
}

TEST(GammaS, UniformRegionAllIndices) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const ConeField field(sys);
  const OrbitLog log = orbit_log(field, make_vec({1.0, 0.1, 0.05}), 60);
  const int q = 5;
  const EhtResult r = gamma_s_times(log, 1.0, 0.5, q);
  EXPECT_EQ(static_cast<long>(r.indices.size()), 60 - q + 1);
  const EhtResult r0 = gamma_s_times(log, 1.0, 0.5, 0);
  EXPECT_EQ(r0.indices.size(), 60u);
}

TEST(GammaS, MatchesDirectWindowProducts) {
  const System sys = build_system(SystemSpec{});
  const ConeField field(sys);
  const Vec z = sys.from_local(make_vec({0.002, 0.02, 0.01}));
  const long n = 80;
  const int q = 4;
  const double C = 1.0, lb = 0.1;
  const OrbitLog log = orbit_log(field, z, n);
  const EhtResult r = gamma_s_times(log, C, lb, q);
  std::vector<long> direct;
  for (long m = q; m <= n; ++m) {
    bool ok = true;
    Mat M = Mat::Identity(3, 3);
    for (int k = 1; k <= q && ok; ++k) {
      M = log.jacobians[static_cast<std::size_t>(m - k)].inverse() * M;
      ok = min_log_stretch(M, log.cones[static_cast<std::size_t>(m)].stable, 32) >= std::log(C) + lb * k;
    }
    if (ok) direct.push_back(m);
  }
  EXPECT_EQ(r.indices, direct);
}

TEST(EhStatistics, BaseSolenoidMeanIsLog2) {
  // thin cones: the rates are those of the invariant directions
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  ConeFieldSpec cs;
  cs.half_angle = 1e-3;
  const ConeField field(sys, cs);
  const OrbitLog log = orbit_log(field, make_vec({1.0, 0.1, 0.05}), 400);
  const EhReport r = eh_statistics(log, 0.1, 1.0, {1, 5}, {0.4, 0.1});
  EXPECT_NEAR(r.birkhoff_mean, std::log(2.0), 0.05);
  for (const auto& row : r.eh2) EXPECT_EQ(row.freq, 0.0);
}

TEST(EhStatistics, StableManifoldOfPHasVanishingMean) {
  const System sys = build_system(SystemSpec{});
  const ConeField field(sys);
  // on the stable axis the orbit converges to p
  const Vec z = sys.from_local(make_vec({0.0, 0.1, 0.0}));
  const OrbitLog log = orbit_log(field, z, 400);
  const EhReport r = eh_statistics(log, 0.1, 1.0, {1}, {0.1});
  EXPECT_LT(std::abs(r.birkhoff_checkpoints.back()), 0.05);
}
