#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ehsrb/errors.hpp"
#include "ehsrb/oracles.hpp"

using namespace ehsrb;

namespace {

const PassageFlow& flow() {
  static const PassageFlow f(PassageParams{});
  return f;
}

Vec e1() { return make_vec({1, 0, 0}); }

// point of Y at radius r with tan theta = t
Vec at(double r, double t) {
  const double u = r / std::sqrt(1 + t * t);
  return make_vec({u, t * u, 0});
}

// full passage on the sphere |x| = r0 at polar angle th from the unstable axis
Vec entry(const PassageParams& p, double th) { return entry_point(p, th, make_vec({1, 0})); }

FlowTrace fine_trace(const Vec& x, const Vec& v) {
  TraceOptions o;
  o.sample_dt = 1e-3;
  return flow().trace(x, v, o);
}

}  // namespace

TEST(TanTheta, AxisTraceIsDegenerate) {
  const FlowTrace tr = flow().trace(make_vec({0.01, 0, 0}), e1());
  EXPECT_THROW(check_tantheta_law(tr, 0.0, 1.0), DegenerateInputError);
}

TEST(TanTheta, EqualTimesGiveZero) {
  const FlowTrace tr = flow().trace(at(0.01, 2.0), e1());
  EXPECT_EQ(check_tantheta_law(tr, 1.0, 1.0), 0.0);
}

TEST(TanTheta, RandomEntriesSatisfyLaw) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> r(0.005, 0.045), t(0.1, 20.0);
  for (int i = 0; i < 20; ++i) {
    const FlowTrace tr = fine_trace(at(r(rng), t(rng)), e1());
    EXPECT_LT(check_tantheta_law(tr, 0.0, tr.exit_time), 1e-6);
  }
}

TEST(RadialOde, AxisDerivativeIsMinusGammaAlpha) {
  const PassageParams& p = flow().params();
  EXPECT_DOUBLE_EQ(p.xi(0.0), -p.gamma);
  const FlowTrace tr = fine_trace(make_vec({0.005, 0, 0}), e1());
  const RadialResidual rr = check_radial_ode(tr);
  EXPECT_LT(rr.max_abs, 1e-5);
  // |x|^-alpha decreases linearly at rate gamma alpha
  const double d = (std::pow(tr.back().norm_x, -p.alpha) - std::pow(tr.front().norm_x, -p.alpha)) / tr.exit_time;
  EXPECT_NEAR(d, -p.gamma * p.alpha, 1e-7);
}

TEST(RadialOde, LargeTanThetaApproachesBetaAlpha) {
  const PassageParams& p = flow().params();
  EXPECT_NEAR(p.xi(1e6), p.beta, 1e-9);
  EXPECT_LT(check_radial_ode(fine_trace(at(0.04, 50.0), e1())).max_abs, 1e-5);
}

TEST(Chevron, BoundsMeetAtTheExitSphere) {
  const FlowTrace tr = flow().trace(entry(flow().params(), 1.2), e1());
  const ChevronResult c = check_chevron_bounds(tr, 0.5);
  EXPECT_TRUE(c.upper_ok);
  EXPECT_NEAR(c.upper_violation, 0.0, 1e-9);  // attained at t = 0 and t = T0
  EXPECT_NEAR(tr.back().norm_x, flow().params().r0, 1e-9);
  EXPECT_TRUE(c.concave);
}

TEST(Chevron, PartialTraceIsPrecondition) {
  EXPECT_THROW(check_chevron_bounds(flow().trace(at(0.01, 2.0), e1()), 0.5), PreconditionError);
}

TEST(Chevron, FittedRatesAboveFloor) {
  const PassageParams& p = flow().params();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> th(0.8, 1.5);
  for (int i = 0; i < 10; ++i) {
    const ChevronResult c = check_chevron_bounds(flow().trace(entry(p, th(rng)), e1()), 0.5);
    EXPECT_TRUE(c.upper_ok);
    EXPECT_TRUE(c.concave);
    EXPECT_GE(c.beta_fit, 0.05 * std::min(p.beta, p.gamma));
    EXPECT_GE(c.gamma_fit, 0.05 * std::min(p.beta, p.gamma));
  }
}

TEST(TsBounds, OutOfRangeSIsPrecondition) {
  const FlowTrace tr = flow().trace(at(0.01, 2.0), e1());
  EXPECT_THROW(check_ts_bounds(tr, 100.0), PreconditionError);
}

TEST(TsBounds, BothRegimesHold) {
  const PassageParams& p = flow().params();
  const double crit = std::sqrt(p.gamma / p.beta);
  const FlowTrace tr = flow().trace(at(0.005, 20.0), e1());
  const TsResult hi = check_ts_bounds(tr, 2 * crit);
  EXPECT_TRUE(hi.upper);
  EXPECT_TRUE(hi.holds);
  const TsResult lo = check_ts_bounds(tr, 0.5 * crit);
  EXPECT_FALSE(lo.upper);
  EXPECT_TRUE(lo.holds);
  // cap on the tail of the tan theta integral
  const double s = 2 * crit;
  EXPECT_LE(integral_tan_theta(tr, hi.Ts, tr.exit_time), s / p.lambda() + 1e-9);
}

TEST(TanRho, AxisTraceIsZero) {
  const FlowTrace tr = flow().trace(make_vec({0.01, 0, 0}), e1());
  const TanRhoResult r = check_tanrho_bounds(tr);
  EXPECT_NEAR(r.max_tan_rho, 0.0, 1e-15);
  EXPECT_TRUE(r.cone_ok);
  EXPECT_TRUE(r.envelope_ok);
  EXPECT_NEAR(integral_tan_rho(tr, 0.0, tr.exit_time), 0.0, 1e-15);
}

TEST(TanRho, ConeBoundaryIsInvariant) {
  const double a = flow().params().alpha;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> t(0.1, 20.0);
  for (int i = 0; i < 20; ++i) {
    const FlowTrace tr = flow().trace(at(0.01, t(rng)), make_vec({1, a / 2, 0}));
    const TanRhoResult r = check_tanrho_bounds(tr);
    EXPECT_TRUE(r.cone_ok) << r.cone_margin;
    EXPECT_GE(r.cone_margin, -1e-9);
  }
}

TEST(CotRho, StableConeBackwardInvariant) {
  const double a = flow().params().alpha;
  TraceOptions o;
  o.backward = true;
  for (double t : {0.05, 0.2, 0.5}) {
    const Vec x = make_vec({t * 0.01, 0.01, 0});
    const FlowTrace tr = flow().trace(x, make_vec({a / 2, 1, 0}), o);
    EXPECT_TRUE(check_cotrho_backward(tr).ok);
  }
}

TEST(Expansion, AxisClosedForms) {
  const PassageParams& p = flow().params();
  const double a = 0.01;
  const FlowTrace tr = fine_trace(make_vec({a, 0, 0}), e1());
  // from |x| = a to the exit sphere; global error of an rtol 1e-9 integration
  EXPECT_NEAR(tr.back().log_expansion, axis_log_expansion(p, a), 1e-7);
  EXPECT_NEAR(std::log(tr.back().v.norm() / tr.front().v.norm()), axis_log_expansion(p, a), 1e-7);
  // gamma int |x|^alpha dt by trapezoid on the trace
  double I = 0;
  for (std::size_t i = 1; i < tr.size(); ++i)
    I += 0.5 * (std::pow(tr.samples[i].norm_x, p.alpha) + std::pow(tr.samples[i - 1].norm_x, p.alpha)) *
         (tr.samples[i].t - tr.samples[i - 1].t);
  EXPECT_NEAR(p.gamma * I, axis_gamma_integral(p, a), 1e-6);
  EXPECT_NEAR(axis_gamma_integral(p, a), std::log(std::pow(a, -p.alpha) / std::pow(p.r0, -p.alpha)) / p.alpha, 1e-12);
}

TEST(Expansion, EqualRatesNeverContract) {
  PassageParams p;
  p.beta = p.gamma;
  const PassageFlow f(p);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> th(0.9, 1.5), c(-1, 1);
  for (int i = 0; i < 20; ++i) {
    const FlowTrace tr = f.trace(entry(p, th(rng)), make_vec({1, 0.25 * c(rng), 0}));
    EXPECT_GE(expansion_along_passage(tr).min_rate, -1e-12);
  }
}

TEST(Expansion, LargeRateRatioContractsTransiently) {
  PassageParams p;
  p.beta = 16 * p.gamma;
  const PassageFlow f(p);
  double worst = 1e300;
  for (double th : {0.5, 1.0, 1.4}) {
    const FlowTrace tr = f.trace(entry(p, th), make_vec({1, p.alpha / 2, 0}));
    const ExpansionResult e = expansion_along_passage(tr);
    worst = std::min(worst, e.min_rate);
    EXPECT_TRUE(std::isfinite(e.log_expansion));
  }
  EXPECT_LT(worst, 0.0);
}

TEST(PairDistortion, SamePointIsZero) {
  const Vec x = at(0.01, 3.0);
  const PairDistortion d = pair_distortion_through_Z(flow(), x, x, e1(), e1());
  EXPECT_EQ(d.delta_log_expansion, 0.0);
}

TEST(Uniformity, FlatMaximaPass) {
  const std::vector<double> bins{5, 20, 80};
  std::vector<std::vector<double>> m(3);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(1.0, 0.05);
  for (auto& b : m)
    for (int i = 0; i < 10; ++i) b.push_back(g(rng));
  EXPECT_TRUE(uniformity_law("flat", bins, m).pass);
  for (std::size_t i = 0; i < 3; ++i)
    for (double& x : m[i]) x += 0.1 * bins[i];
  EXPECT_FALSE(uniformity_law("growing", bins, m).pass);
}
