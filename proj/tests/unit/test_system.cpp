#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ehsrb/errors.hpp"
#include "ehsrb/system.hpp"

using namespace ehsrb;

namespace {

const System& slowed3() {
  static const System s = build_system(SystemSpec{});
  return s;
}

Vec local_point(const System& sys, std::initializer_list<double> x) {
  return sys.from_local(make_vec(x));
}

// RK4 on x' = |x|^alpha A x with a fixed step, stopped when |x| crosses r0.
double reference_exit_time(const PassageParams& p, Vec x, double dt) {
  auto f = [&](const Vec& y) {
    Vec d = y;
    const double s = std::pow(y.norm(), p.alpha);
    d(0) = s * p.gamma * y(0);
    for (int i = 1; i < y.size(); ++i) d(i) = -s * p.beta * y(i);
    return d;
  };
  double t = 0;
  for (;;) {
    const Vec k1 = f(x), k2 = f(x + 0.5 * dt * k1), k3 = f(x + 0.5 * dt * k2), k4 = f(x + dt * k3);
    const Vec nx = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    if (nx.norm() >= p.r0) {
      // linear interpolation in the norm across the last step
      const double a = x.norm(), b = nx.norm();
      return t + dt * (p.r0 - a) / (b - a);
    }
    x = nx;
    t += dt;
  }
}

}  // namespace

TEST(SystemSpec, DefaultIsValid) {
  EXPECT_NO_THROW(SystemSpec{}.validate());
  EXPECT_NO_THROW(build_system(SystemSpec{}, ModelKind::kLocal));
  EXPECT_NO_THROW(build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase));
}

TEST(SystemSpec, RejectsBadRadiiAndAlpha) {
  SystemSpec s;
  s.r0 = 0.2;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SystemSpec{};
  s.alpha = 1.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s.alpha = 0.0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = SystemSpec{};
  s.gamma = 0.5;  // must equal log(base_expansion)
  EXPECT_THROW(build_system(s), ConfigError);
}

TEST(SystemStep, FixedPointIsFixed) {
  const System& sys = slowed3();
  const Vec p = sys.fixed_point();
  EXPECT_LT(sys.distance(sys.step(p), p), 1e-14);
  const Mat J = sys.jacobian(p);
  EXPECT_LT((J - Mat::Identity(3, 3)).norm(), 1e-12);
}

TEST(SystemStep, OutsideZMatchesSolenoid) {
  const System& sys = slowed3();
  const System base = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(1.0, 5.0), y(-0.3, 0.3);
  for (int i = 0; i < 50; ++i) {
    const Vec z = make_vec({th(rng), y(rng), y(rng)});
    ASSERT_FALSE(sys.in_tube(z));
    EXPECT_LT(sys.distance(sys.step(z), sys.base_map(z)), 1e-15);
    EXPECT_LT(sys.distance(base.step(z), sys.base_map(z)), 1e-15);
    EXPECT_LT((sys.jacobian(z) - sys.base_jacobian(z)).norm(), 1e-13);
    // solenoid formula: theta doubles, cross-section contracts by 1/4
    const Vec w = sys.base_map(z);
    EXPECT_NEAR(wrap_angle(w(0) - 2 * z(0)), 0.0, 1e-12);
  }
}

TEST(SystemStep, UnstableAxisMatchesScalarClosedForm) {
  const System& sys = slowed3();
  const SystemSpec& s = sys.spec();
  const double a = 0.02;
  const Vec x = sys.to_local(sys.step(local_point(sys, {a, 0, 0})));
  const double expect = std::pow(std::pow(a, -s.alpha) - s.alpha * s.gamma, -1.0 / s.alpha);
  EXPECT_NEAR(x(0), expect, 1e-9 * expect);
  EXPECT_NEAR(x(1), 0.0, 1e-15);
  EXPECT_NEAR(x(2), 0.0, 1e-15);
}

TEST(SystemStep, JacobianMatchesFiniteDifferencesInY) {
  const System& sys = slowed3();
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> rad(0.005, 0.045);
  double worst = 0;
  for (int i = 0; i < 20; ++i) {
    Vec d = make_vec({g(rng), g(rng), g(rng)});
    d *= rad(rng) / d.norm();
    const Vec z = sys.from_local(d);
    const Mat J = sys.jacobian(z);
    Mat F(3, 3);
    const double h = 1e-6;
    for (int j = 0; j < 3; ++j) {
      Vec e = Vec::Zero(3);
      e(j) = h;
      F.col(j) = (sys.displacement(sys.step(z - e), sys.step(z + e))) / (2 * h);
    }
    worst = std::max(worst, (F - J).norm() / J.norm());
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(FlowThroughZ, AxisTraceHasZeroAngles) {
  const System& sys = slowed3();
  const FlowTrace tr = sys.flow_through_Z(make_vec({0.01, 0, 0}), make_vec({1, 0, 0}));
  for (const auto& s : tr.samples) {
    EXPECT_EQ(s.tan_theta, 0.0);
    EXPECT_NEAR(s.tan_rho, 0.0, 1e-15);
  }
  EXPECT_NEAR(tr.back().norm_x, sys.spec().r0, 1e-9);
}

TEST(FlowThroughZ, ExitTimeMatchesFixedStepReference) {
  const System& sys = slowed3();
  const double r = 0.01, u = r / std::sqrt(101.0);
  const Vec x0 = make_vec({u, 10 * u, 0});
  const FlowTrace tr = sys.flow_through_Z(x0, make_vec({1, 0, 0}));
  const double ref = reference_exit_time(sys.spec().passage(3), x0, 1e-3);
  EXPECT_NEAR(tr.exit_time, ref, 1e-6 * std::max(1.0, ref));
}

TEST(FlowThroughZ, ExitTimeVanishesAtTheSphere) {
  const System& sys = slowed3();
  const double r0 = sys.spec().r0;
  const Vec x0 = make_vec({r0 * (1 - 1e-9), 1e-6, 0});
  const FlowTrace tr = sys.flow_through_Z(x0, make_vec({1, 0, 0}));
  EXPECT_LT(tr.exit_time, 1e-6);
}

TEST(SystemInverse, InverseStepRoundTrips) {
  const System& sys = slowed3();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> th(0, kTwoPi), y(-0.2, 0.2);
  for (int i = 0; i < 30; ++i) {
    const Vec z = sys.step(make_vec({th(rng), y(rng), y(rng)}));
    EXPECT_LT(sys.distance(sys.step(sys.inverse_step(z)), z), 1e-9);
  }
}

TEST(SystemIterate, FastPathMatchesStepping) {
  const System& sys = slowed3();
  const Vec z0 = local_point(sys, {0.02, 0.01, 0.005});
  Vec z = z0, v = make_vec({1, 0.1, 0});
  double ls = 0;
  const long n = sys.first_exit(z0, 1000) + 2;
  for (long k = 0; k < n; ++k) {
    auto [nz, nv] = sys.step_with_tangent(z, v);
    ls += std::log(nv.norm() / v.norm());
    z = nz;
    v = nv.normalized();
  }
  // one flow call versus one per iterate: both at integrator tolerance
  const auto r = sys.iterate_with_tangent(z0, make_vec({1, 0.1, 0}), n);
  EXPECT_LT(sys.distance(r.z, z), 1e-8);
  EXPECT_NEAR(r.log_stretch, ls, 1e-7);
}

TEST(SystemFirstExit, CountsIteratesInZ) {
  const System& sys = slowed3();
  EXPECT_EQ(sys.first_exit(make_vec({3.0, 0.1, 0.1}), 100), 1);
  const Vec z = local_point(sys, {0.001, 0.0, 0.0});
  const long t = sys.first_exit(z, 100000);
  ASSERT_GT(t, 1);
  Vec w = z;
  for (long k = 0; k < t - 1; ++k) {
    w = sys.step(w);
    EXPECT_TRUE(sys.in_z(w)) << k;
  }
  EXPECT_FALSE(sys.in_z(sys.step(w)));
}
