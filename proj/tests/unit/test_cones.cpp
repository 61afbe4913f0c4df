#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ehsrb/cones.hpp"
#include "ehsrb/errors.hpp"

using namespace ehsrb;

TEST(ConeRates, DiagonalMapWithThinCones) {
  Mat D = Mat::Zero(2, 2);
  D(0, 0) = 2.0;
  D(1, 1) = 0.5;
  const RateSample r = rates_from_jacobian(D, reference_cones(2, 1e-9), 0.5);
  EXPECT_NEAR(r.lambda_u, std::log(2.0), 1e-9);
  EXPECT_NEAR(r.lambda_s, -std::log(2.0), 1e-9);
  EXPECT_NEAR(r.defect, 0.0, 1e-12);
  EXPECT_NEAR(r.theta, kPi / 2, 1e-8);
}

TEST(ConeRates, IdentityAtFixedPoint) {
  const System sys = build_system(SystemSpec{});
  const ConeField field(sys);
  const Vec p = sys.fixed_point();
  const RateSample r = cone_rates(sys, p, field.reference());
  EXPECT_NEAR(r.lambda_u, 0.0, 1e-12);
  EXPECT_NEAR(r.lambda_s, 0.0, 1e-12);
  EXPECT_NEAR(r.defect, 0.0, 1e-12);
  EXPECT_NEAR(r.lambda, 0.0, 1e-12);
}

TEST(ConeRates, MatchesDenseSamplingInY) {
  const System sys = build_system(SystemSpec{});
  const ConePair p = reference_cones(3, 0.4);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 5; ++trial) {
    Vec d = make_vec({g(rng), g(rng), g(rng)});
    d *= 0.03 / d.norm();
    const Vec z = sys.from_local(d);
    const Mat D = sys.jacobian(z);
    const RateSample r = cone_rates(sys, z, p);
    double umin = 1e300, smax = -1e300;
    const double tw = std::tan(0.4);
    auto probe = [&](double t, double phi) {
      const Vec vu = make_vec({1, t * std::cos(phi), t * std::sin(phi)});
      umin = std::min(umin, std::log((D * vu).norm() / vu.norm()));
      const Vec vs = make_vec({t, std::cos(phi), std::sin(phi)});
      smax = std::max(smax, std::log((D * vs).norm() / vs.norm()));
    };
    std::uniform_real_distribution<double> U(0, 1);
    for (int i = 0; i < 10000; ++i) {
      probe(tw, kTwoPi * i / 10000.0);                       // cone boundary
      probe(tw * std::sqrt(U(rng)), kTwoPi * U(rng));        // interior
      probe(-tw * std::sqrt(U(rng)), kTwoPi * U(rng));
    }
    EXPECT_LE(r.lambda_u, umin + 1e-12);
    EXPECT_NEAR(r.lambda_u, umin, 1e-4);
    EXPECT_GE(r.lambda_s, smax - 1e-12);
    EXPECT_NEAR(r.lambda_s, smax, 1e-4);
  }
}

TEST(PushCone, StrictContainmentOutsideZ) {
  const System sys = build_system(SystemSpec{});
  const ConeField field(sys);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> th(0.5, 5.5), y(-0.3, 0.3);
  for (int i = 0; i < 30; ++i) {
    const Vec z = make_vec({th(rng), y(rng), y(rng)});
    if (sys.in_tube(z) || sys.in_tube(sys.step(z))) continue;
    const PushReport r = push_cone(sys, field, z);
    EXPECT_TRUE(r.contained);
    EXPECT_GT(r.unstable_margin, 0.0);
    EXPECT_GT(r.stable_margin, 0.0);
  }
}

TEST(PushCone, IdentityAtFixedPointHasZeroMargin) {
  const ConePair c = reference_cones(3, 0.4);
  const PushReport r = push_cone(Mat::Identity(3, 3), c, c);
  EXPECT_TRUE(r.contained);
  EXPECT_NEAR(r.unstable_margin, 0.0, 1e-12);
  EXPECT_NEAR(r.stable_margin, 0.0, 1e-12);
}

TEST(CheckC1, BaseSolenoidHasNoViolations) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const C1Report r = check_c1(sys, 0.4, 200, 1);
  EXPECT_EQ(r.violations, 0);
  EXPECT_GT(r.worst_unstable_margin, 0.0);
}

TEST(CheckC1, SlowedSystemSmallSample) {
  const System sys = build_system(SystemSpec{});
  const C1Report r = check_c1(sys, 0.4, 100, 2);
  EXPECT_EQ(r.violations, 0);
  EXPECT_GT(r.through_z, 0);
}

TEST(CheckC1, OversizedConesAreReported) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const C1Report r = check_c1(sys, kPi / 3, 200, 1);
  EXPECT_GT(r.violations, 0);
  ASSERT_FALSE(r.examples.empty());
  EXPECT_EQ(r.examples.front().z.size(), 3);
}

TEST(ConeGeometry, MembershipAndAngle) {
  const ConePair c = reference_cones(2, 0.4);
  EXPECT_TRUE(c.unstable.contains(make_vec({1, 0.3})));
  EXPECT_FALSE(c.unstable.contains(make_vec({1, 0.5})));
  EXPECT_TRUE(c.stable.contains(make_vec({0.3, 1})));
  EXPECT_NEAR(cone_angle(c), kPi / 2 - 0.8, 1e-12);
}

TEST(ConeGeometry, RegularizeClampsConditioning) {
  Mat M = Mat::Identity(2, 2);
  M(1, 1) = 1e-12;
  const Mat R = regularize_transform(M);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(R);
  const auto s = svd.singularValues();
  EXPECT_NEAR(s(0) / s(1), kMaxConeConditioning, 1e-3 * kMaxConeConditioning);
  EXPECT_THROW(regularize_transform(Mat::Zero(2, 2)), NumericError);
}
