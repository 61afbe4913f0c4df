#include "ehsrb/cones.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ehsrb/errors.hpp"

namespace ehsrb {

namespace {

constexpr double kGolden = 0.6180339887498949;

double slope_of(const Cone& c, const Vec& w) {
  const double a = std::abs(w(0));
  const double b = w.tail(w.size() - 1).norm();
  if (c.kind == Cone::Kind::kUnstable) return a == 0 ? std::numeric_limits<double>::infinity() : b / a;
  return b == 0 ? std::numeric_limits<double>::infinity() : a / b;
}

// Canonical-frame boundary direction (not normalised).
Vec canonical_ray(const Cone& c, int d, double phi) {
  const double t = std::tan(c.half_angle);
  Vec w(d);
  if (c.kind == Cone::Kind::kUnstable) {
    w(0) = 1.0;
    if (d == 2) {
      w(1) = t * std::cos(phi);
    } else {
      w(1) = t * std::cos(phi);
      w(2) = t * std::sin(phi);
    }
  } else {
    if (d == 2) {
      w(0) = t * std::cos(phi);
      w(1) = 1.0;
    } else {
      w(0) = t;
      w(1) = std::cos(phi);
      w(2) = std::sin(phi);
    }
  }
  return w;
}

// Golden-section minimisation of f on [a, b].
template <class F>
double golden_min(F&& f, double a, double b, int iters = 40) {
  double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iters; ++i) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kGolden * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kGolden * (b - a);
      f2 = f(x2);
    }
  }
  return f1 < f2 ? x1 : x2;
}

// Minimum over phi of f on the boundary circle: coarse scan then refinement.
template <class F>
double circle_min(F&& f, int coarse) {
  double best = std::numeric_limits<double>::infinity();
  int bi = 0;
  for (int i = 0; i < coarse; ++i) {
    const double v = f(kTwoPi * i / coarse);
    if (v < best) {
      best = v;
      bi = i;
    }
  }
  const double h = kTwoPi / coarse;
  const double phi = golden_min(f, kTwoPi * bi / coarse - h, kTwoPi * bi / coarse + h);
  return std::min(best, f(phi));
}

// Extremum of R(w) = w'Pw / w'Qw over the canonical cone; sign = +1 for min, -1 for max.
double extremize_ratio(const Mat& P, const Mat& Q, const Cone& c, double sign, int lattice) {
  const int d = static_cast<int>(P.rows());
  auto R = [&](const Vec& w) { return sign * (w.dot(P * w) / w.dot(Q * w)); };
  double best = std::numeric_limits<double>::infinity();
  // interior critical points
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Q);
  if (es.info() == Eigen::Success) {
    for (int i = 0; i < d; ++i) {
      Vec w = es.eigenvectors().col(i);
      if (slope_of(c, w) <= std::tan(c.half_angle)) best = std::min(best, R(w));
    }
  }
  // boundary
  if (d == 2) {
    best = std::min(best, R(canonical_ray(c, d, 0.0)));
    best = std::min(best, R(canonical_ray(c, d, kPi)));
  } else {
    best = std::min(best, circle_min([&](double phi) { return R(canonical_ray(c, d, phi)); }, 64));
    // guard lattice inside the cone
    const double t = std::tan(c.half_angle);
    for (int i = 0; i < lattice; ++i) {
      const double frac = (i + 0.5) / lattice;
      const double ang = kTwoPi * std::fmod(i * kGolden, 1.0);
      Vec w(3);
      if (c.kind == Cone::Kind::kUnstable) {
        const double rr = t * std::sqrt(frac);
        w << 1.0, rr * std::cos(ang), rr * std::sin(ang);
      } else {
        w << t * (2 * frac - 1), std::cos(ang / 2), std::sin(ang / 2);
      }
      best = std::min(best, R(w));
    }
  }
  return sign * best;
}

Mat inverse_checked(const Mat& T) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(T);
  const auto& s = svd.singularValues();
  if (!(s(s.size() - 1) > 0) || s(0) / s(s.size() - 1) > 1e14 || !std::isfinite(s(0)))
    throw NumericError("cone transform is singular");
  return T.inverse();
}

double stretch_extremum(const Mat& D, const Cone& c, double sign, int lattice) {
  const Mat Ti = c.is_reference() ? Mat(Mat::Identity(D.rows(), D.cols())) : inverse_checked(c.transform);
  const Mat DT = D * Ti;
  const Mat P = DT.transpose() * DT;
  const Mat Q = Ti.transpose() * Ti;
  return 0.5 * std::log(extremize_ratio(P, Q, c, sign, lattice));
}

// Angle of a 2D line in [0, pi).
double line_dir(const Vec& v) {
  double a = std::atan2(v(1), v(0));
  if (a < 0) a += kPi;
  if (a >= kPi) a -= kPi;
  return a;
}

// Arc [lo, lo + len] (mod pi) covered by a 2D cone.
std::pair<double, double> cone_arc(const Cone& c) {
  const Vec b1 = c.boundary_ray(0.0), b2 = c.boundary_ray(kPi), ax = c.axis();
  const double a1 = line_dir(b1), a2 = line_dir(b2), aa = line_dir(ax);
  auto ccw = [](double from, double to) {
    double d = to - from;
    while (d < 0) d += kPi;
    while (d >= kPi) d -= kPi;
    return d;
  };
  // the arc from a1 containing the axis
  if (ccw(a1, aa) <= ccw(a1, a2)) return {a1, ccw(a1, a2)};
  return {a2, ccw(a2, a1)};
}

}  // namespace

bool Cone::is_reference() const {
  if (transform.size() == 0) return true;
  return transform.isIdentity(0.0);
}

bool Cone::contains(const Vec& v, double slack) const { return margin(v) >= -slack; }

double Cone::margin(const Vec& v) const {
  const Vec w = is_reference() ? v : Vec(transform * v);
  return half_angle - std::atan(slope_of(*this, w));
}

Vec Cone::boundary_ray(double phi) const {
  const int d = static_cast<int>(transform.rows());
  if (d == 0) throw GeometryError("boundary_ray needs a dimensioned cone");
  Vec w = canonical_ray(*this, d, phi);
  Vec v = is_reference() ? w : Vec(transform.inverse() * w);
  return v / v.norm();
}

Vec Cone::axis() const {
  const int d = static_cast<int>(transform.rows());
  Vec w = Vec::Zero(d);
  if (kind == Kind::kUnstable)
    w(0) = 1.0;
  else
    w(1) = 1.0;
  Vec v = transform.inverse() * w;
  return v / v.norm();
}

ConePair reference_cones(int dim, double half_angle) {
  ConePair p;
  p.unstable.kind = Cone::Kind::kUnstable;
  p.unstable.half_angle = half_angle;
  p.unstable.transform = Mat::Identity(dim, dim);
  p.stable.kind = Cone::Kind::kStable;
  p.stable.half_angle = half_angle;
  p.stable.transform = Mat::Identity(dim, dim);
  return p;
}

ConeField::ConeField(const System& sys, ConeFieldSpec spec) : sys_(&sys), spec_(spec) {
  if (!(spec_.half_angle > 0 && spec_.half_angle < kPi / 2))
    throw ConfigError("cone half_angle must lie in (0, pi/2)");
}

ConePair ConeField::reference() const { return reference_cones(sys_->dim(), spec_.half_angle); }

Mat regularize_transform(const Mat& M) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd s = svd.singularValues();
  if (!std::isfinite(s(0)) || !(s(0) > 0)) throw NumericError("cone transform is singular");
  const double floor = s(0) / kMaxConeConditioning;
  if (s(s.size() - 1) >= floor) return M / M.norm();
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::max(s(i), floor);
  const Eigen::MatrixXd R = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  return Mat(R / R.norm());
}

ConePair ConeField::at(const Vec& z) const {
  ConePair p = reference();
  if (!sys_->slowed() || !sys_->in_z(z)) return p;
  if (auto be = sys_->backward_entry(z, spec_.max_backward)) {
    p.unstable.transform = regularize_transform(be->forward_jacobian.inverse());
  }
  const long n = sys_->first_exit(z, spec_.max_backward);
  if (n <= spec_.max_backward) {
    Mat M = sys_->flow().advance_with_jacobian(sys_->to_local(z), static_cast<double>(n)).second;
    p.stable.transform = regularize_transform(M);
  }
  return p;
}

double min_log_stretch(const Mat& D, const Cone& c, int lattice) {
  return stretch_extremum(D, c, 1.0, lattice);
}

double max_log_stretch(const Mat& D, const Cone& c, int lattice) {
  return stretch_extremum(D, c, -1.0, lattice);
}

double cone_angle(const ConePair& p) {
  const Cone& U = p.unstable;
  const Cone& S = p.stable;
  const int d = static_cast<int>(U.transform.rows());
  if (U.is_reference() && S.is_reference())
    return std::max(0.0, kPi / 2 - U.half_angle - S.half_angle);
  if (d == 2) {
    auto [ul, ulen] = cone_arc(U);
    auto [sl, slen] = cone_arc(S);
    auto ccw = [](double from, double to) {
      double x = to - from;
      while (x < 0) x += kPi;
      while (x >= kPi) x -= kPi;
      return x;
    };
    const double gap1 = ccw(ul, sl) - ulen;          // from end of U to start of S
    const double gap2 = ccw(sl, ul) - slen;          // from end of S to start of U
    if (gap1 <= 0 || gap2 <= 0) return 0.0;
    return std::min(gap1, gap2);
  }
  // 3D: overlap test, then boundary-pair minimisation.
  if (S.contains(U.axis()) || U.contains(S.axis())) return 0.0;
  constexpr int kRing = 64;
  std::vector<Vec> ur(kRing), sr(kRing);
  for (int i = 0; i < kRing; ++i) {
    ur[i] = U.boundary_ray(kTwoPi * i / kRing);
    sr[i] = S.boundary_ray(kTwoPi * i / kRing);
    if (S.contains(ur[i]) || U.contains(sr[i])) return 0.0;
  }
  double best = kPi;
  int bi = 0, bj = 0;
  for (int i = 0; i < kRing; ++i)
    for (int j = 0; j < kRing; ++j) {
      const double a = line_angle(ur[i], sr[j]);
      if (a < best) {
        best = a;
        bi = i;
        bj = j;
      }
    }
  double pu = kTwoPi * bi / kRing, ps = kTwoPi * bj / kRing;
  const double h = kTwoPi / kRing;
  for (int it = 0; it < 6; ++it) {
    const Vec s0 = S.boundary_ray(ps);
    pu = golden_min([&](double a) { return line_angle(U.boundary_ray(a), s0); }, pu - h, pu + h, 30);
    const Vec u0 = U.boundary_ray(pu);
    ps = golden_min([&](double a) { return line_angle(u0, S.boundary_ray(a)); }, ps - h, ps + h, 30);
  }
  return std::min(best, line_angle(U.boundary_ray(pu), S.boundary_ray(ps)));
}

RateSample rates_from_jacobian(const Mat& D, const ConePair& p, double alpha, int lattice) {
  RateSample r;
  r.theta = cone_angle(p);
  if (!(r.theta > 0)) throw GeometryError("cone_rates: unstable and stable cones are not disjoint");
  r.lambda_u = min_log_stretch(D, p.unstable, lattice);
  r.lambda_s = max_log_stretch(D, p.stable, lattice);
  r.defect = std::max(0.0, r.lambda_s - r.lambda_u) / alpha;
  r.lambda = std::min(r.lambda_u - r.defect, -r.lambda_s);
  return r;
}

RateSample cone_rates(const System& sys, const Vec& z, const ConePair& p, int lattice) {
  return rates_from_jacobian(sys.jacobian(z), p, sys.spec().alpha, lattice);
}

namespace {
// Smallest margin of the images of the boundary rays of `src` under M in `dst`.
double ray_margin(const Mat& M, const Cone& src, const Cone& dst, int rays) {
  const int d = static_cast<int>(M.rows());
  auto f = [&](double phi) { return dst.margin(M * src.boundary_ray(phi)); };
  if (d == 2) return std::min(f(0.0), f(kPi));
  return circle_min(f, rays);
}
}  // namespace

PushReport push_cone(const Mat& D, const ConePair& source, const ConePair& target, int rays,
                     double tol) {
  const Mat Di = inverse_checked(D);
  PushReport r;
  r.image = source;
  const Mat Tu = source.unstable.transform * Di;
  r.image.unstable.transform = Tu / Tu.norm();
  const Mat Ts = source.stable.transform * Di;
  r.image.stable.transform = Ts / Ts.norm();
  r.unstable_margin = ray_margin(D, source.unstable, target.unstable, rays);
  r.stable_margin = ray_margin(Di, target.stable, source.stable, rays);
  r.contained = r.unstable_margin >= -tol && r.stable_margin >= -tol;
  return r;
}

PushReport push_cone(const System& sys, const ConeField& field, const Vec& z, int rays) {
  auto [gz, D] = sys.step_with_jacobian(z);
  return push_cone(D, field.at(z), field.at(gz), rays, 1e-9);
}

C1Report check_c1(const System& sys, double half_angle, long n_samples, unsigned long long seed,
                  long max_return, int rays) {
  const int d = sys.dim();
  const double r1 = sys.spec().r1;
  const ConePair ref = reference_cones(d, half_angle);
  C1Report rep;
  rep.worst_unstable_margin = std::numeric_limits<double>::infinity();
  rep.worst_stable_margin = std::numeric_limits<double>::infinity();
  rep.min_angle = cone_angle(ref);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U01(0.0, 1.0);
  auto uniform_ball = [&](double radius) {
    Vec x(d);
    do {
      for (int i = 0; i < d; ++i) x(i) = radius * (2 * U01(rng) - 1);
    } while (x.norm() >= radius);
    return x;
  };
  const bool overlap = !(rep.min_angle > 0);
  for (long i = 0; i < n_samples; ++i) {
    Vec z(d);
    if (i % 2 == 0 || !sys.slowed()) {
      do {
        z(0) = kTwoPi * U01(rng);
        z.tail(d - 1) = uniform_ball(1.0).head(d - 1);
      } while (sys.in_z(z));
    } else {
      std::optional<System::BackwardEntry> be;
      while (!be) be = sys.backward_entry(sys.from_local(uniform_ball(r1)), static_cast<int>(max_return));
      z = be->entry;
    }
    ++rep.samples;
    // the inverse is accumulated per step: D itself is too ill-conditioned
    // to invert after a long passage
    Mat D = Mat::Identity(d, d), Dinv = Mat::Identity(d, d);
    Vec cur = z;
    long t = 0;
    bool entered = false;
    do {
      auto [nz, J] = sys.step_with_jacobian(cur);
      D = J * D;
      Dinv = Dinv * J.inverse();
      if (D.norm() > 1e100) D /= D.norm();
      if (Dinv.norm() > 1e100) Dinv /= Dinv.norm();
      cur = nz;
      ++t;
      if (sys.in_z(cur)) entered = true;
    } while (sys.in_z(cur) && t <= max_return);
    if (entered) ++rep.through_z;
    if (t > max_return) {
      ++rep.unresolved;
      continue;
    }
    const double mu = ray_margin(D, ref.unstable, ref.unstable, rays);
    const double ms = ray_margin(Dinv, ref.stable, ref.stable, rays);
    rep.worst_unstable_margin = std::min(rep.worst_unstable_margin, mu);
    rep.worst_stable_margin = std::min(rep.worst_stable_margin, ms);
    if (mu < 0 || ms < 0 || overlap) {
      ++rep.violations;
      if (rep.examples.size() < 16) rep.examples.push_back({z, t, mu, ms});
    }
  }
  return rep;
}

}  // namespace ehsrb
