#include <gtest/gtest.h>

#include <cmath>

#include "ehsrb/errors.hpp"
#include "ehsrb/srb.hpp"

using namespace ehsrb;

namespace {

CurveChain base_direction_curve(double length = 0.1, std::size_t n = 257) {
  return make_chain(SeedCurve::segment(make_vec({1.0, 0.1, 0.05}), make_vec({1, 0, 0}), length), 0.0,
                    length, n);
}

}  // namespace

TEST(Pushforward, ZeroStepsIsLeafVolume) {
  const System sys = build_system(SystemSpec{});
  const CurveChain c = base_direction_curve();
  const EmpiricalMeasure m = pushforward_leaf_volume(sys, c, 0, GridSpec{3, 32});
  EXPECT_NEAR(m.total_mass, 0.1, 1e-12);
  EXPECT_NEAR(m.box_mass(), m.total_mass, 1e-12 * m.total_mass);
}

TEST(Pushforward, MassConservedForAnyN) {
  const System sys = build_system(SystemSpec{});
  const CurveChain c = base_direction_curve();
  for (long n : {1L, 5L, 12L}) {
    PushforwardOptions o;
    o.h_max = 0.01;
    const EmpiricalMeasure m = pushforward_leaf_volume(sys, c, n, GridSpec{3, 32}, o);
    EXPECT_NEAR(m.total_mass, 0.1, 1e-9) << n;
  }
}

TEST(Pushforward, BaseSolenoidEquidistributes) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const CurveChain c = base_direction_curve(0.1, 4001);
  const EmpiricalMeasure m = pushforward_leaf_volume(sys, c, 20, GridSpec{3, 32});
  EXPECT_LT(m.angular_ks(), 0.05);
}

TEST(Cesaro, OneStepIsLeafVolume) {
  const System sys = build_system(SystemSpec{});
  const CurveChain c = base_direction_curve();
  const CesaroResult r = cesaro_measure(sys, c, 1, GridSpec{3, 32});
  const EmpiricalMeasure m = pushforward_leaf_volume(sys, c, 0, GridSpec{3, 32});
  ASSERT_EQ(r.measure.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i) EXPECT_DOUBLE_EQ(r.measure.weights[i], m.weights[i]);
  EXPECT_EQ(r.measure.boxes, m.boxes);
}

TEST(Cesaro, RecursionOnSampleWeights) {
  const System sys = build_system(SystemSpec{});
  const CurveChain c = base_direction_curve(0.1, 33);
  const long n = 6;
  const CesaroResult a = cesaro_measure(sys, c, n, GridSpec{3, 16});
  const CesaroResult b = cesaro_measure(sys, c, n + 1, GridSpec{3, 16});
  const EmpiricalMeasure f = pushforward_leaf_volume(sys, c, n, GridSpec{3, 16});
  // mu_{n+1} = (n mu_n + g^n_* m_W) / (n + 1), compared box by box
  std::map<long long, double> expect;
  for (const auto& [k, v] : a.measure.boxes) expect[k] += v * n / (n + 1);
  for (const auto& [k, v] : f.boxes) expect[k] += v / (n + 1);
  ASSERT_EQ(expect.size(), b.measure.boxes.size());
  for (const auto& [k, v] : expect) EXPECT_NEAR(b.measure.boxes.at(k), v, 1e-15);
}

TEST(Cesaro, InvarianceDefectWithinTelescopingBound) {
  const System sys = build_system(SystemSpec{});
  const CesaroResult r = cesaro_measure(sys, base_direction_curve(0.1, 65), 50, GridSpec{3, 16}, false);
  EXPECT_LE(r.invariance_defect, r.defect_bound);
}

TEST(Lyapunov, BaseSolenoidSpectrum) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const LyapunovEstimate e = lyapunov_exponents(sys, make_vec({1.0, 0.1, 0.05}), 20000, 100);
  ASSERT_EQ(e.exponents.size(), 3u);
  EXPECT_NEAR(e.exponents[0], std::log(2.0), 1e-3);
  EXPECT_NEAR(e.exponents[1], std::log(0.25), 1e-3);
  EXPECT_NEAR(e.exponents[2], std::log(0.25), 1e-3);
}

TEST(Lyapunov, SlowedSystemIsHyperbolic) {
  const System sys = build_system(SystemSpec{});
  const LyapunovEstimate e = lyapunov_exponents(sys, make_vec({1.0, 0.1, 0.05}), 20000, 100);
  EXPECT_GT(e.exponents.front(), 0.0);
  EXPECT_LT(e.exponents.back(), 0.0);
}

TEST(Birkhoff, AgreesWithCesaroMeasure) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const TestFamily fam(3);
  const CurveChain c = base_direction_curve(0.1, 129);
  const CesaroResult r = cesaro_measure(sys, c, 200, GridSpec{3, 16}, false);
  const double mass = r.measure.total_mass;
  for (int j : {0, 7, 33}) {
    const MeanSe b = birkhoff_average(sys, fam, j, make_vec({1.0, 0.1, 0.05}), 200000);
    EXPECT_NEAR(r.moments[j] / mass, b.mean, std::max(2 * b.se, 0.02)) << j;
  }
}

TEST(TestFamily, BoundedAndDeterministic) {
  const TestFamily fam(3);
  const Vec z = make_vec({1.3, 0.2, -0.4});
  const auto v = fam.values(z);
  ASSERT_EQ(v.size(), 64u);
  for (double x : v) EXPECT_LE(std::abs(x), 1.0);
  EXPECT_EQ(v, TestFamily(3).values(z));
}

TEST(LeafDiagnostic, LeafVolumeHasUnitRatio) {
  const System sys = build_system(SystemSpec{});
  PushforwardOptions o;
  o.track_leaves = true;
  const EmpiricalMeasure m = pushforward_leaf_volume(sys, base_direction_curve(), 0, GridSpec{3, 16}, o);
  const LeafReport r = leaf_absolute_continuity(m);
  ASSERT_EQ(r.leaves.size(), 1u);
  EXPECT_NEAR(r.max_ratio, 1.0, 1e-12);
  EXPECT_FALSE(r.any_concentrated);
}

TEST(LeafDiagnostic, PointMassIsFlagged) {
  const System sys = build_system(SystemSpec{});
  PushforwardOptions o;
  o.track_leaves = true;
  EmpiricalMeasure m = pushforward_leaf_volume(sys, base_direction_curve(), 0, GridSpec{3, 16}, o);
  for (std::size_t i = 0; i < m.size(); ++i) m.weights[i] = (i == m.size() / 2) ? 1.0 : 0.0;
  m.rebuild_boxes();
  const LeafReport r = leaf_absolute_continuity(m);
  EXPECT_TRUE(r.any_concentrated);
}

TEST(LeafDiagnostic, SparseLeafIsSkipped) {
  EmpiricalMeasure m;
  for (int i = 0; i < 3; ++i) m.add(make_vec({0.1 * i, 0, 0}), 1.0, 4, 0.1 * i);
  const LeafReport r = leaf_absolute_continuity(m);
  EXPECT_EQ(r.skipped, 1);
  EXPECT_TRUE(r.leaves.empty());
}

TEST(Grid, BinningConservesMass) {
  EmpiricalMeasure m;
  m.grid = GridSpec{3, 8};
  for (int i = 0; i < 100; ++i) m.add(make_vec({0.06 * i, 0.01 * i - 0.5, 0.3}), 0.01 * (i + 1));
  EXPECT_NEAR(m.box_mass(), m.total_mass, 1e-12 * m.total_mass);
  const EmpiricalMeasure nm = m.normalized();
  EXPECT_NEAR(nm.total_mass, 1.0, 1e-12);
}

TEST(Stats, KolmogorovSmirnovOfUniformGrid) {
  std::vector<std::pair<double, double>> v;
  for (int i = 0; i < 1000; ++i) v.push_back({(i + 0.5) / 1000.0, 1.0});
  EXPECT_LE(ks_uniform(v, 0.0, 1.0), 5e-4 + 1e-12);
  std::vector<std::pair<double, double>> w{{0.1, 1.0}};
  EXPECT_NEAR(ks_uniform(w, 0.0, 1.0), 0.9, 1e-12);
}

TEST(Stats, RegressionRecoversLine) {
  std::vector<double> x, y;
  for (int i = 0; i < 20; ++i) {
    x.push_back(i);
    y.push_back(2.5 - 0.75 * i + (i % 2 ? 1e-3 : -1e-3));
  }
  const LinearFit f = linear_regression(x, y);
  EXPECT_NEAR(f.slope, -0.75, 1e-4);
  EXPECT_NEAR(f.intercept, 2.5, 1e-3);
  EXPECT_TRUE(f.ci_contains(f.slope));
  EXPECT_FALSE(f.ci_contains(0.0));
}
