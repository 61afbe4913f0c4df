#include "ehsrb/passage.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ehsrb/errors.hpp"
#include "ehsrb/io.hpp"

namespace ehsrb {

double PassageParams::xi(double s) const {
  if (std::isinf(s)) return beta;
  return (beta * s * s - gamma) / (s * s + 1.0);
}

void PassageParams::validate() const {
  if (!(gamma > 0)) throw ConfigError("gamma must be positive");
  if (!(beta > 0)) throw ConfigError("beta must be positive");
  if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in the open interval (0, 1)");
  if (!(r0 > 0)) throw ConfigError("r0 must be positive");
  if (!(r0 < r1)) throw ConfigError("r0 must be smaller than r1");
  if (!(r0 < 1)) throw ConfigError("r0 must be below 1 so that psi increases to 1");
  if (dim != 2 && dim != 3) throw ConfigError("passage dimension must be 2 or 3");
  // Fritsch-Carlson: Hermite blend r0^a -> 1 with end slopes (a r0^(a-1), 0).
  const double jump = 1.0 - std::pow(r0, alpha);
  const double slope = alpha * std::pow(r0, alpha - 1.0) * (r1 - r0) / jump;
  if (slope > 3.0)
    throw ConfigError("psi blend on [r0, r1] is not monotone (r1 - r0 too large for alpha, r0)");
}

PassageFlow::PassageFlow(PassageParams p, OdeOptions opt) : p_(p), opt_(opt) {
  p_.validate();
  h0_ = std::pow(p_.r0, p_.alpha);
  m0_ = p_.alpha * std::pow(p_.r0, p_.alpha - 1.0) * (p_.r1 - p_.r0);
}

double PassageFlow::psi(double r) const {
  if (r <= p_.r0) return std::pow(r, p_.alpha);
  if (r >= p_.r1) return 1.0;
  const double s = (r - p_.r0) / (p_.r1 - p_.r0);
  const double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * h0_ + (s3 - 2 * s2 + s) * m0_ + (-2 * s3 + 3 * s2);
}

double PassageFlow::dpsi(double r) const {
  if (r <= 0) return 0.0;
  if (r <= p_.r0) return p_.alpha * std::pow(r, p_.alpha - 1.0);
  if (r >= p_.r1) return 0.0;
  const double H = p_.r1 - p_.r0;
  const double s = (r - p_.r0) / H;
  const double s2 = s * s;
  return ((6 * s2 - 6 * s) * h0_ + (3 * s2 - 4 * s + 1) * m0_ + (-6 * s2 + 6 * s)) / H;
}

namespace {

inline void apply_A(const PassageParams& p, const double* x, double* out, int d) {
  out[0] = p.gamma * x[0];
  for (int i = 1; i < d; ++i) out[i] = -p.beta * x[i];
}

inline void copy_seg(const OdeVec& y, int off, int d, Vec& out) {
  out.resize(d);
  for (int i = 0; i < d; ++i) out(i) = y(off + i);
}

TraceSample sample_from_state(double t, const OdeVec& y, int d) {
  TraceSample s;
  s.t = t;
  copy_seg(y, 0, d, s.x);
  copy_seg(y, d, d, s.v);
  s.norm_x = s.x.norm();
  const double xs = s.x.tail(d - 1).norm();
  const double vs = s.v.tail(d - 1).norm();
  s.tan_theta = s.x(0) == 0.0 ? std::numeric_limits<double>::infinity() : xs / std::abs(s.x(0));
  s.tan_rho = s.v(0) == 0.0 ? std::numeric_limits<double>::infinity() : vs / std::abs(s.v(0));
  s.J = y(2 * d);
  s.log_expansion = y(2 * d + 1);
  return s;
}

}  // namespace

Vec PassageFlow::field(const Vec& x) const {
  const int d = p_.dim;
  Vec out(d);
  apply_A(p_, x.data(), out.data(), d);
  return psi(x.norm()) * out;
}

Mat PassageFlow::field_jacobian(const Vec& x) const {
  const int d = p_.dim;
  Mat D = Mat::Zero(d, d);
  const double r = x.norm();
  const double ps = psi(r);
  D(0, 0) = p_.gamma * ps;
  for (int i = 1; i < d; ++i) D(i, i) = -p_.beta * ps;
  if (r > 1e-150 && r < p_.r1) {
    // psi'(r)/r (A x) x^T ; written to avoid psi'/r blowing up near 0
    Vec xh = x / r;
    Vec Axh(d);
    apply_A(p_, xh.data(), Axh.data(), d);
    const double w = dpsi(r) * r;
    D.noalias() += w * Axh * xh.transpose();
  }
  return D;
}

OdeVec PassageFlow::rhs_state(const OdeVec& y) const {
  const int d = p_.dim;
  double r2 = 0;
  for (int i = 0; i < d; ++i) r2 += y(i) * y(i);
  const double ps = psi(std::sqrt(r2));
  OdeVec out(d);
  out(0) = ps * p_.gamma * y(0);
  for (int i = 1; i < d; ++i) out(i) = -ps * p_.beta * y(i);
  return out;
}

OdeVec PassageFlow::rhs_jacobian(const OdeVec& y) const {
  const int d = p_.dim;
  Vec x(d);
  copy_seg(y, 0, d, x);
  const Mat D = field_jacobian(x);
  OdeVec out(d + d * d);
  Vec fx = field(x);
  for (int i = 0; i < d; ++i) out(i) = fx(i);
  for (int c = 0; c < d; ++c)
    for (int i = 0; i < d; ++i) {
      double acc = 0;
      for (int k = 0; k < d; ++k) acc += D(i, k) * y(d + c * d + k);
      out(d + c * d + i) = acc;
    }
  return out;
}

OdeVec PassageFlow::rhs_tangent(const OdeVec& y) const {
  const int d = p_.dim;
  Vec x(d), v(d);
  copy_seg(y, 0, d, x);
  copy_seg(y, d, d, v);
  const Mat D = field_jacobian(x);
  const Vec fx = field(x);
  const Vec dv = D * v;
  OdeVec out(2 * d);
  for (int i = 0; i < d; ++i) {
    out(i) = fx(i);
    out(d + i) = dv(i);
  }
  return out;
}

OdeVec PassageFlow::rhs_trace(const OdeVec& y, double sign) const {
  const int d = p_.dim;
  Vec x(d), v(d);
  copy_seg(y, 0, d, x);
  copy_seg(y, d, d, v);
  const Mat D = field_jacobian(x);
  const Vec fx = field(x);
  const Vec dv = D * v;
  OdeVec out(2 * d + 2);
  for (int i = 0; i < d; ++i) {
    out(i) = sign * fx(i);
    out(d + i) = sign * dv(i);
  }
  out(2 * d) = p_.lambda() * std::pow(x.norm(), p_.alpha);
  out(2 * d + 1) = sign * v.dot(dv) / v.squaredNorm();
  return out;
}

Vec PassageFlow::advance(const Vec& x, double t) const {
  OdeVec y = x;
  auto rhs = [this](double, const OdeVec& s) { return rhs_state(s); };
  OdeResult r = integrate_dp45(rhs, 0.0, y, t, opt_);
  return r.y;
}

std::pair<Vec, Mat> PassageFlow::advance_with_jacobian(const Vec& x, double t) const {
  const int d = p_.dim;
  OdeVec y(d + d * d);
  for (int i = 0; i < d; ++i) y(i) = x(i);
  for (int c = 0; c < d; ++c)
    for (int i = 0; i < d; ++i) y(d + c * d + i) = (i == c) ? 1.0 : 0.0;
  auto rhs = [this](double, const OdeVec& s) { return rhs_jacobian(s); };
  OdeResult r = integrate_dp45(rhs, 0.0, y, t, opt_);
  Vec xo(d);
  Mat M(d, d);
  for (int i = 0; i < d; ++i) xo(i) = r.y(i);
  for (int c = 0; c < d; ++c)
    for (int i = 0; i < d; ++i) M(i, c) = r.y(d + c * d + i);
  return {xo, M};
}

std::pair<Vec, Vec> PassageFlow::advance_with_tangent(const Vec& x, const Vec& v,
                                                      double t) const {
  const int d = p_.dim;
  OdeVec y(2 * d);
  for (int i = 0; i < d; ++i) {
    y(i) = x(i);
    y(d + i) = v(i);
  }
  auto rhs = [this](double, const OdeVec& s) { return rhs_tangent(s); };
  OdeResult r = integrate_dp45(rhs, 0.0, y, t, opt_);
  Vec xo(d), vo(d);
  copy_seg(r.y, 0, d, xo);
  copy_seg(r.y, d, d, vo);
  return {xo, vo};
}

double PassageFlow::linear_min_norm(const Vec& x, double t1, bool backward) const {
  // Growing component a with rate ga, decaying component b with rate gb.
  double a2 = x(0) * x(0), b2 = 0;
  for (int i = 1; i < p_.dim; ++i) b2 += x(i) * x(i);
  double ga = p_.gamma, gb = p_.beta;
  if (backward) {
    std::swap(a2, b2);
    std::swap(ga, gb);
  }
  auto n2 = [&](double t) { return a2 * std::exp(2 * ga * t) + b2 * std::exp(-2 * gb * t); };
  double ts = t1;
  if (a2 > 0) {
    if (b2 == 0) return std::sqrt(a2);
    ts = std::log(gb * b2 / (ga * a2)) / (2 * p_.lambda());
  }
  ts = std::clamp(ts, 0.0, t1);
  return std::sqrt(n2(ts));
}

namespace {

// Scan one segment for the first point where pred flips from `from` to !from.
// Returns the bracketing pair if found.
template <class Norm>
std::optional<std::pair<double, double>> scan_segment(const DenseSegment& seg, Norm&& g,
                                                      bool want_positive, double& last_t,
                                                      double& last_g) {
  constexpr int kProbe = 8;
  for (int k = 1; k <= kProbe; ++k) {
    const double t = seg.t0 + seg.h * (static_cast<double>(k) / kProbe);
    const double gv = g(seg.eval(t));
    const bool hit = want_positive ? (gv >= 0 && last_g < 0) : (gv < 0 && last_g >= 0);
    if (hit) return std::make_pair(last_t, t);
    last_t = t;
    last_g = gv;
  }
  return std::nullopt;
}

}  // namespace

double PassageFlow::exit_time(const Vec& x, double horizon) const {
  const int d = p_.dim;
  const double r = x.norm();
  if (r > p_.r0 * (1 + 1e-12)) throw DomainError("exit_time: start point outside Y");
  Vec Ax(d);
  apply_A(p_, x.data(), Ax.data(), d);
  if (r >= p_.r0 * (1 - 1e-14) && x.dot(Ax) >= 0) return 0.0;
  auto rhs = [this](double, const OdeVec& s) { return rhs_state(s); };
  auto g = [&](const OdeVec& s) { return s.head(d).norm() - p_.r0; };
  double last_t = 0, last_g = -1;  // treat the start as inside
  std::optional<double> found;
  auto obs = [&](const DenseSegment& seg) -> std::optional<double> {
    auto br = scan_segment(seg, g, true, last_t, last_g);
    if (!br) return std::nullopt;
    const double te =
        bisect_root([&](double t) { return g(seg.eval(t)); }, br->first, br->second);
    found = te;
    return te;
  };
  integrate_dp45(rhs, 0.0, OdeVec(x), horizon, opt_, obs);
  if (!found) throw HorizonError("passage did not exit Y before the horizon", horizon);
  return *found;
}

std::pair<double, double> PassageFlow::ball_window(const Vec& x, double radius,
                                                   double horizon, bool backward) const {
  const int d = p_.dim;
  const double r = x.norm();
  // Orbits are reparametrised linear orbits, so |x(t)| has a single minimum.
  if (r >= radius && linear_min_norm(x, 1e9, backward) >= radius) return {0.0, 0.0};
  const double sign = backward ? -1.0 : 1.0;
  auto rhs = [this, sign](double, const OdeVec& s) { return OdeVec(sign * rhs_state(s)); };
  auto g = [&](const OdeVec& s) { return s.head(d).norm() - radius; };
  double t_in = r < radius ? 0.0 : -1.0;
  double t_out = -1.0;
  double last_t = 0, last_g = r - radius;
  bool missed = false;
  auto obs = [&](const DenseSegment& seg) -> std::optional<double> {
    if (t_in < 0) {
      auto br = scan_segment(seg, g, false, last_t, last_g);
      if (!br) {
        // A sojourn shorter than the probe spacing was stepped over.
        if (seg.eval(seg.t1()).head(d).norm() > 4 * radius + 1.0) {
          missed = true;
          return seg.t1();
        }
        return std::nullopt;
      }
      t_in = bisect_root([&](double t) { return g(seg.eval(t)); }, br->first, br->second);
      last_t = t_in;
      last_g = -1e-300;
      // continue scanning remainder of the segment for the exit
      constexpr int kProbe = 8;
      for (int k = 1; k <= kProbe; ++k) {
        const double t = t_in + (seg.t1() - t_in) * (static_cast<double>(k) / kProbe);
        const double gv = g(seg.eval(t));
        if (gv >= 0) {
          t_out = bisect_root([&](double tt) { return g(seg.eval(tt)); }, last_t, t);
          return t_out;
        }
        last_t = t;
        last_g = gv;
      }
      return std::nullopt;
    }
    auto br = scan_segment(seg, g, true, last_t, last_g);
    if (!br) return std::nullopt;
    t_out = bisect_root([&](double t) { return g(seg.eval(t)); }, br->first, br->second);
    return t_out;
  };
  integrate_dp45(rhs, 0.0, OdeVec(x), horizon, opt_, obs);
  if (t_in < 0 || missed) return {0.0, 0.0};
  if (t_out < 0) throw HorizonError("orbit did not leave the ball before the horizon", horizon);
  return {t_in, t_out};
}

FlowTrace PassageFlow::trace(const Vec& x0, const Vec& v0, const TraceOptions& topt) const {
  const int d = p_.dim;
  if (x0.size() != d || v0.size() != d) throw DomainError("trace: dimension mismatch");
  if (v0.norm() == 0.0) throw DomainError("trace: tangent vector is zero");
  const double r = x0.norm();
  if (r > p_.r0 * (1 + 1e-12)) throw DomainError("trace: start point outside Y");
  const double sign = topt.backward ? -1.0 : 1.0;
  const double s2 = x0.tail(d - 1).squaredNorm();
  if (!topt.backward && x0(0) == 0.0)
    throw HorizonError("start point on the stable subspace never exits Y", topt.horizon);
  if (topt.backward && s2 == 0.0)
    throw HorizonError("start point on the unstable subspace never exits Y backwards",
                       topt.horizon);

  FlowTrace tr;
  tr.params = p_;
  tr.backward = topt.backward;

  OdeVec y0(2 * d + 2);
  for (int i = 0; i < d; ++i) {
    y0(i) = x0(i);
    y0(d + i) = v0(i);
  }
  y0(2 * d) = 0;
  y0(2 * d + 1) = 0;

  auto make_sample = [d](double t, const OdeVec& y) { return sample_from_state(t, y, d); };

  // Leaves immediately: outward radial velocity on the sphere.
  Vec Ax(d);
  apply_A(p_, x0.data(), Ax.data(), d);
  if (r >= p_.r0 * (1 - 1e-14) && sign * x0.dot(Ax) >= 0) {
    tr.samples.push_back(make_sample(0.0, y0));
    tr.exit_time = 0.0;
    tr.sample_spacing = 0.0;
    return tr;
  }

  std::vector<DenseSegment> segs;
  auto rhs = [this, sign](double, const OdeVec& s) { return rhs_trace(s, sign); };
  auto g = [&](const OdeVec& s) { return s.head(d).norm() - p_.r0; };
  double last_t = 0, last_g = -1;
  std::optional<double> found;
  auto obs = [&](const DenseSegment& seg) -> std::optional<double> {
    segs.push_back(seg);
    auto br = scan_segment(seg, g, true, last_t, last_g);
    if (!br) return std::nullopt;
    const double te =
        bisect_root([&](double t) { return g(seg.eval(t)); }, br->first, br->second);
    found = te;
    return te;
  };
  OdeResult res = integrate_dp45(rhs, 0.0, y0, topt.horizon, opt_, obs);
  if (!found) throw HorizonError("passage did not exit Y before the horizon", topt.horizon);
  const double T0 = *found;
  tr.exit_time = T0;
  const double dt = std::min(topt.sample_dt, 0.01 * std::min(1.0, T0));
  tr.sample_spacing = dt;

  tr.samples.reserve(static_cast<std::size_t>(T0 / dt) + 2 * segs.size() + 4);
  tr.samples.push_back(make_sample(0.0, y0));
  std::size_t grid_k = 1;
  for (const DenseSegment& seg : segs) {
    const double te = std::min(seg.t1(), T0);
    while (true) {
      const double tg = static_cast<double>(grid_k) * dt;
      if (tg >= te - 1e-12 * dt) break;
      if (tg > tr.samples.back().t + 1e-12 * dt) {
        tr.samples.push_back(make_sample(tg, seg.eval(tg)));
        tr.samples.back().on_grid = true;
      }
      ++grid_k;
    }
    if (te < T0 && te > tr.samples.back().t + 1e-12 * dt)
      tr.samples.push_back(make_sample(te, seg.eval(te)));
  }
  // Final sample exactly at the exit event.
  if (T0 - tr.samples.back().t <= 1e-12 * dt && tr.samples.size() > 1) tr.samples.pop_back();
  tr.samples.push_back(make_sample(T0, res.y));
  tr.samples.front().on_grid = true;
  tr.segments = std::move(segs);
  return tr;
}

TraceSample FlowTrace::sample_at(double t) const {
  const int d = params.dim;
  if (segments.empty()) return samples.front();
  t = std::clamp(t, 0.0, exit_time);
  if (t == exit_time) return samples.back();
  auto it = std::lower_bound(segments.begin(), segments.end(), t,
                             [](const DenseSegment& s, double tt) { return s.t1() < tt; });
  if (it == segments.end()) --it;
  return sample_from_state(t, it->eval(t), d);
}

Vec FlowTrace::position_at(double t) const { return sample_at(t).x; }

double FlowTrace::tan_theta_at(double t) const {
  const Vec x = position_at(t);
  if (x(0) == 0.0) return std::numeric_limits<double>::infinity();
  return x.tail(x.size() - 1).norm() / std::abs(x(0));
}

void FlowTrace::write_csv(std::ostream& os) const {
  CsvWriter w(os);
  const int d = params.dim;
  w.field("t");
  for (int i = 1; i <= d; ++i) w.field("x" + std::to_string(i));
  for (int i = 1; i <= d; ++i) w.field("v" + std::to_string(i));
  w.field("tan_theta").field("tan_rho").field("norm_x").field("J");
  w.end_row();
  for (const auto& s : samples) {
    w.field(s.t);
    for (int i = 0; i < d; ++i) w.field(s.x(i));
    for (int i = 0; i < d; ++i) w.field(s.v(i));
    w.field(s.tan_theta).field(s.tan_rho).field(s.norm_x).field(s.J);
    w.end_row();
  }
}

}  // namespace ehsrb
