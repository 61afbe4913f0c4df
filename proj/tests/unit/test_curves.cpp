#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ehsrb/config.hpp"
#include "ehsrb/curves.hpp"
#include "ehsrb/errors.hpp"

using namespace ehsrb;

namespace {

CurveChain outside_segment(const System& sys, double length = 0.1, std::size_t n = 33) {
  return make_chain(SeedCurve::segment(make_vec({2.0, 0.1, 0.05}), make_vec({1, 0, 0}), length), 0.0,
                    length, n);
}

}  // namespace

TEST(EvolveCurve, ZeroStepsIsIdentity) {
  const System sys = build_system(SystemSpec{});
  CurveChain c = outside_segment(sys);
  const CurveChain before = c;
  evolve_curve(sys, c, 0);
  ASSERT_EQ(c.size(), before.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(c.samples[i].log_phi, 0.0);
    EXPECT_EQ(c.samples[i].z, before.samples[i].z);
  }
}

TEST(EvolveCurve, RefinedSamplesKeepFullHistory) {
  const System sys = build_system(SystemSpec{});
  CurveChain c = make_chain(outside_segment(sys).seed, 0.0, 0.1, 5, true);
  evolve_curve(sys, c, 6);
  ASSERT_GT(c.size(), 5u);
  for (const auto& s : c.samples) {
    ASSERT_EQ(s.history.size(), 7u);
    EXPECT_EQ(s.history.back(), s.z);
    EXPECT_LT(sys.distance(s.history.front(), c.seed->eval(s.sigma).first), 1e-15);
  }
}

TEST(EvolveCurve, BaseSolenoidDoublesLeafVolume) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  // along e_theta exactly: the image tangent picks up o'(theta), so phi is
  // the length of (2, o'(theta)); on the flat core piece near theta = 0 it is 2
  CurveChain c = make_chain(SeedCurve::segment(sys.from_local(make_vec({-0.05, 0.0, 0.0})),
                                               make_vec({1, 0, 0}), 0.1), 0.0, 0.1, 17);
  evolve_curve(sys, c, 1);
  for (const auto& s : c.samples) EXPECT_NEAR(s.log_phi, std::log(2.0), 1e-12);
  EXPECT_NEAR(c.image_length(), 0.2, 1e-9);
}

TEST(EvolveCurve, RefinementBoundsSpacing) {
  const System sys = build_system(SystemSpec{});
  CurveChain c = outside_segment(sys);
  EvolveOptions eo;
  eo.h_max = 0.01;
  evolve_curve(sys, c, 5, eo);
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LE(sys.distance(c.samples[i - 1].z, c.samples[i].z), 0.01 + 1e-12);
  EXPECT_GT(c.image_length(), 0.1 * 20);
}

TEST(EvolveCurve, LogPhiMatchesTangentStretch) {
  const System sys = build_system(SystemSpec{});
  const CurveConfig cc = curve_config_from(default_config());
  CurveChain c = seed_chain(sys, cc, 0.1, 9);
  evolve_curve(sys, c, 6, cc.evolve);
  for (const auto& s : c.samples) {
    const auto [z0, v0] = c.seed->eval(s.sigma);
    const auto r = sys.iterate_with_tangent(z0, v0, 6);
    // per-step versus per-sojourn integration
    EXPECT_NEAR(s.log_phi, r.log_stretch, 1e-6);
    EXPECT_LT(sys.distance(s.z, r.z), 1e-6);
  }
}

TEST(EvolveCurve, PassageExpansionMatchesFlowTrace) {
  const System sys = build_system(SystemSpec{});
  // a point in Y on a short unstable segment; its passage is a single flow
  const Vec x0 = make_vec({0.004, 0.02, 0.0});
  const Vec v0 = make_vec({1.0, 0.0, 0.0});
  const FlowTrace tr = sys.flow_through_Z(x0, v0);
  const long n = static_cast<long>(std::floor(tr.exit_time));
  ASSERT_GT(n, 2);
  CurveChain c = make_chain(SeedCurve::segment(sys.from_local(x0), v0, 1e-7), 0.0, 1e-7, 2);
  evolve_curve(sys, c, n);
  const TraceSample s = tr.sample_at(static_cast<double>(n));
  EXPECT_NEAR(c.samples.front().log_phi, s.log_expansion, 1e-4);
}

TEST(TrimToAdmissible, ShortAdmissibleImageIsSingleton) {
  const System sys = build_system(SystemSpec{});
  const CurveChain c = outside_segment(sys, 0.2, 65);
  GeometryCaps caps;
  const auto pieces = trim_to_admissible(sys, c, caps);
  ASSERT_EQ(pieces.size(), 1u);
  EXPECT_EQ(pieces[0].samples.size(), c.size());
  EXPECT_TRUE(pieces[0].satisfies(caps));
}

TEST(TrimToAdmissible, LongImageSplitsIntoAdmissiblePieces) {
  const System sys = build_system(SystemSpec{});
  CurveChain c = outside_segment(sys);
  EvolveOptions eo;
  eo.h_max = 0.005;
  evolve_curve(sys, c, 4, eo);
  GeometryCaps caps;
  const auto pieces = trim_to_admissible(sys, c, caps);
  ASSERT_GE(pieces.size(), 2u);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    EXPECT_TRUE(pieces[i].is_graph);
    EXPECT_LE(pieces[i].gamma_geom, caps.gamma_bar + 1e-12);
    EXPECT_LE(pieces[i].kappa, caps.kappa_bar + 1e-12);
  }
}

TEST(Decomposition, PartitionsTheCurve) {
  const System sys = build_system(SystemSpec{}, ModelKind::kLocal);
  const Json cfg = [] {
    Json c = default_config();
    c["model"]["kind"] = "local";
    c["simulate"]["x0"] = Json::array({1.0, 0.1});
    return c;
  }();
  const CurveConfig cc = curve_config_from(cfg);
  CurveChain c = seed_chain(sys, cc, cc.seed_length, cc.seed_samples);
  evolve_curve(sys, c, cc.steps, cc.evolve);
  // one admissible stretch of the evolved curve
  const auto trimmed = trim_to_admissible(sys, c, cc.caps);
  ASSERT_FALSE(trimmed.empty());
  const auto& a = trimmed.front();
  CurveChain piece;
  piece.seed = c.seed;
  piece.steps = c.steps;
  piece.samples = a.samples;
  DecompositionParams p = cc.decomposition;
  const double len = piece.image_length();
  p.epsilon = std::clamp(p.epsilon, len / 2, len);
  p.max_resolved_tau = 60;
  const auto pieces = admissible_decomposition(sys, piece, p);
  ASSERT_FALSE(pieces.empty());
  EXPECT_DOUBLE_EQ(pieces.front().sigma_lo, piece.samples.front().sigma);
  EXPECT_DOUBLE_EQ(pieces.back().sigma_hi, piece.samples.back().sigma);
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    EXPECT_LT(pieces[i].sigma_lo, pieces[i].sigma_hi);
    if (i > 0) EXPECT_EQ(pieces[i].sigma_lo, pieces[i - 1].sigma_hi);
    if (pieces[i].residual) continue;
    EXPECT_TRUE(pieces[i].image_outside_z);
    EXPECT_GE(pieces[i].image_length, p.epsilon * (1 - 1e-6));
    EXPECT_LE(pieces[i].image_length, 2 * p.epsilon * (1 + 1e-6));
  }
}

TEST(Decomposition, RejectsCurveOutsideLengthWindow) {
  const System sys = build_system(SystemSpec{});
  const CurveChain c = outside_segment(sys, 0.05);
  DecompositionParams p;
  p.epsilon = 0.1;
  EXPECT_THROW(admissible_decomposition(sys, c, p), PreconditionError);
}

TEST(Decomposition, TauIncreasesTowardStableManifoldOfP) {
  // entry curve crossing the stable axis: first-exit time grows as the
  // points approach it
  const System sys = build_system(SystemSpec{}, ModelKind::kLocal);
  const double r0 = sys.spec().r0;
  long prev = 0;
  for (double u : {0.02, 0.01, 0.005, 0.002, 0.001, 0.0005}) {
    const long t = sys.first_exit(sys.from_local(make_vec({u, 0.9 * r0})), 1000000);
    EXPECT_GT(t, prev) << u;
    prev = t;
  }
}

TEST(TailFit, RecoversSyntheticPowerLaw) {
  IntHistogram h;
  for (long t = 1; t <= 100000; ++t) h[t] = 1e15 * std::pow(static_cast<double>(t), -3.0);
  const TailFit f = return_time_tail_fit(h, 10, 1e5, 20, 50, 0.0);
  EXPECT_NEAR(f.exponent, 3.0, 0.02);
  EXPECT_LE(f.ci_lo, f.exponent);
  EXPECT_GE(f.ci_hi, f.exponent);
}

TEST(TailFit, TooFewValuesIsAnError) {
  IntHistogram h{{10, 5.0}, {11, 3.0}};
  EXPECT_THROW(return_time_tail_fit(h, 1, 100), StatisticsError);
}

TEST(Distortion, SamePointIsZero) {
  const System sys = build_system(SystemSpec{});
  const CurveChain c = outside_segment(sys);
  CurvePiece p;
  p.sigma_lo = 0;
  p.sigma_hi = 0.1;
  p.tau = 3;
  const auto d = distortion_ratio(sys, c, p, 0.03, 0.03);
  EXPECT_EQ(d.log_ratio, 0.0);
}

TEST(Distortion, FlatPieceOfBaseSolenoidIsZero) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  // tangent along e_theta on the tube, where the map has constant derivative
  CurveChain c = make_chain(SeedCurve::segment(sys.from_local(make_vec({-0.04, 0.0, 0.0})),
                                               make_vec({1, 0, 0}), 0.05), 0.0, 0.05, 9);
  CurvePiece p;
  p.sigma_lo = 0;
  p.sigma_hi = 0.05;
  p.tau = 1;
  EXPECT_NEAR(distortion_ratio(sys, c, p, 0.0, 0.05).log_ratio, 0.0, 1e-12);
}

TEST(Besicovitch, SingleCenter) {
  const std::vector<Window> w{{0.0, 1.0}};
  const CoverResult c = besicovitch_cover(w);
  EXPECT_EQ(c.classes.size(), 1u);
  EXPECT_TRUE(cover_is_valid(w, c));
}

TEST(Besicovitch, ThreeCentersTwoColours) {
  const std::vector<Window> w{{0.0, 0.4}, {0.5, 0.4}, {1.0, 0.4}};
  const CoverResult c = besicovitch_cover(w);
  EXPECT_TRUE(cover_is_valid(w, c));
  EXPECT_LE(c.classes.size(), 2u);
  // the classes are an independent-set partition of the overlap graph
  for (const auto& cls : c.classes)
    for (std::size_t i = 0; i < cls.size(); ++i)
      for (std::size_t j = i + 1; j < cls.size(); ++j)
        EXPECT_TRUE(w[cls[i]].hi() < w[cls[j]].lo() || w[cls[j]].hi() < w[cls[i]].lo());
}

TEST(Besicovitch, EqualRadiiNeedAtMostTwoClasses) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(0, 100);
  std::vector<Window> w;
  for (int i = 0; i < 1000; ++i) w.push_back({U(rng), 0.7});
  const CoverResult c = besicovitch_cover(w);
  EXPECT_TRUE(cover_is_valid(w, c));
  EXPECT_LE(c.classes.size(), 2u);
}

TEST(Besicovitch, InvalidCoverIsDetected) {
  const std::vector<Window> w{{0.0, 0.4}, {0.5, 0.4}, {5.0, 0.1}};
  CoverResult c = besicovitch_cover(w);
  ASSERT_TRUE(cover_is_valid(w, c));
  c.selected.pop_back();
  for (auto& cls : c.classes) cls.erase(std::remove(cls.begin(), cls.end(), 2u), cls.end());
  EXPECT_FALSE(cover_is_valid(w, c));
}

TEST(StandardPair, UniformStretchPassesAllClauses) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const ConeField field(sys);
  CurveChain c = make_chain(SeedCurve::segment(make_vec({2.0, 0.1, 0.05}), make_vec({1, 0, 0}), 0.01),
                            0.0, 0.01, 33, true);
  evolve_curve(sys, c, 3);
  const auto pieces = trim_to_admissible(sys, c, GeometryCaps{});
  ASSERT_FALSE(pieces.empty());
  const StandardPair sp = standard_pair_from(pieces.front());
  StandardPairChecks k;
  k.q = 2;
  const StandardPairReport r = verify_standard_pair(sys, field, sp, k);
  EXPECT_TRUE(r.all()) << r.to_json().dump();
}

TEST(StandardPair, TrivialDensityPassesDensityClauses) {
  const System sys = build_system(SystemSpec{});
  const ConeField field(sys);
  const CurveChain c = make_chain(SeedCurve::segment(make_vec({2.0, 0.1, 0.05}), make_vec({1, 0, 0}), 0.05),
                                  0.0, 0.05, 17, true);
  const auto pieces = trim_to_admissible(sys, c, GeometryCaps{});
  ASSERT_EQ(pieces.size(), 1u);
  StandardPair sp = standard_pair_from(pieces.front());
  for (double r : sp.rho) EXPECT_DOUBLE_EQ(r, 1.0);
  StandardPairChecks k;
  k.L = 1.0;
  const StandardPairReport r = verify_standard_pair(sys, field, sp, k);
  EXPECT_TRUE(r.density_bounds);
  EXPECT_TRUE(r.density_holder);
}

TEST(StandardPair, MissingHistoryIsPrecondition) {
  const System sys = build_system(SystemSpec{});
  const ConeField field(sys);
  CurveChain c = outside_segment(sys);
  evolve_curve(sys, c, 1);
  const auto pieces = trim_to_admissible(sys, c, GeometryCaps{});
  EXPECT_THROW(verify_standard_pair(sys, field, standard_pair_from(pieces.front()), {}), PreconditionError);
}

TEST(Itineraries, MeanBoundAndEnvelope) {
  const System sys = build_system(SystemSpec{});
  const CurveConfig cc = curve_config_from(default_config());
  CurveChain c = seed_chain(sys, cc, cc.seed_length, cc.seed_samples);
  ItineraryParams p;
  p.n_itineraries = 40;
  p.length = 100;
  p.window = 100;
  p.min_count = 20;
  const ItineraryReport r = return_itineraries(sys, c, p, 3);
  EXPECT_GT(r.returns, 0);
  EXPECT_LE(r.returns, 40 * 100);
  double total = 0;
  for (const auto& [t, m] : r.pmf) {
    EXPECT_GE(t, 1);
    total += m;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_GT(r.mean_return, 1.0);
  EXPECT_NEAR(r.R_fit, 1.5 * r.mean_return, 1e-12);
  EXPECT_GT(r.K_fit, 0.0);
}

TEST(PartialSums, UniformRegionHasNoDeficit) {
  const System sys = build_system(SystemSpec{}, ModelKind::kSolenoid, MapVariant::kBase);
  const ConeField field(sys);
  const CurveChain c = outside_segment(sys);
  std::vector<CurvePiece> pieces(3);
  for (int i = 0; i < 3; ++i) {
    pieces[i].sigma_lo = 0.03 * i;
    pieces[i].sigma_hi = 0.03 * (i + 1);
    pieces[i].tau = 2 + i;
  }
  const PartialSumReport r = piece_partial_sums(field, c, pieces);
  EXPECT_EQ(r.pieces, 3);
  // empty sums bound both extremes by 0; every other partial sum has the right sign
  EXPECT_EQ(r.min_unstable, 0.0);
  EXPECT_EQ(r.max_stable, 0.0);
  EXPECT_EQ(r.C_fit, 0.0);
}
