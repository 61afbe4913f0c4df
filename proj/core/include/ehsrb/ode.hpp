#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>

#include "ehsrb/errors.hpp"

namespace ehsrb {

// Flow state plus auxiliaries (tangent, Jacobian columns, accumulators).
using OdeVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 16, 1>;

struct OdeOptions {
  double atol = 1e-10;
  double rtol = 1e-9;
  double h_max = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 20'000'000;
};

// Continuous extension of one accepted Dormand-Prince step (4th order).
struct DenseSegment {
  double t0 = 0.0;
  double h = 0.0;
  OdeVec r1, r2, r3, r4, r5;

  double t1() const { return t0 + h; }
  OdeVec eval(double t) const {
    const double s = (t - t0) / h;
    const double s1 = 1.0 - s;
    return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * r5)));
  }
};

struct OdeResult {
  double t = 0.0;
  OdeVec y;
  std::size_t steps = 0;
  std::size_t rejected = 0;
  bool stopped = false;  // an observer ended the integration early
};

namespace detail {

inline double error_norm(const OdeVec& err, const OdeVec& y0, const OdeVec& y1,
                         const OdeOptions& o) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = o.atol + o.rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double e = err(i) / sc;
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

}  // namespace detail

// Adaptive Dormand-Prince 5(4) from t0 to t_end (either direction).
// `observe(segment)` is called after every accepted step; returning a time
// inside the segment stops integration there (state from dense output).
template <class Rhs, class Observe>
OdeResult integrate_dp45(Rhs&& rhs, double t0, const OdeVec& y0, double t_end,
                         const OdeOptions& opt, Observe&& observe) {
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                   a75 = -2187.0 / 6784, a76 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                   d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                   d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

  OdeResult res;
  res.t = t0;
  res.y = y0;
  const double span = t_end - t0;
  if (span == 0.0) return res;
  const double dir = span > 0 ? 1.0 : -1.0;

  OdeVec y = y0;
  OdeVec k1 = rhs(t0, y);

  // Initial step from the standard two-derivative heuristic.
  double h;
  {
    double d0 = 0, dd1 = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = opt.atol + opt.rtol * std::abs(y(i));
      d0 += (y(i) / sc) * (y(i) / sc);
      dd1 += (k1(i) / sc) * (k1(i) / sc);
    }
    d0 = std::sqrt(d0 / y.size());
    dd1 = std::sqrt(dd1 / y.size());
    double h0 = (d0 < 1e-5 || dd1 < 1e-5) ? 1e-6 : 0.01 * d0 / dd1;
    h0 = std::min(h0, std::abs(span));
    OdeVec y1 = y + dir * h0 * k1;
    OdeVec f1 = rhs(t0 + dir * h0, y1);
    double d2 = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const double sc = opt.atol + opt.rtol * std::abs(y(i));
      const double q = (f1(i) - k1(i)) / sc;
      d2 += q * q;
    }
    d2 = std::sqrt(d2 / y.size()) / h0;
    double h1 = (std::max(dd1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                            : std::pow(0.01 / std::max(dd1, d2), 0.2);
    h = std::min({100 * h0, h1, std::abs(span), opt.h_max});
  }

  double t = t0;
  OdeVec k2, k3, k4, k5, k6, k7, ytmp, ynew;
  DenseSegment seg;
  while (true) {
    if (res.steps + res.rejected >= opt.max_steps)
      throw NumericError("ode: step budget exhausted");
    const double remaining = (t_end - t) * dir;
    bool last = false;
    if (h >= remaining) {
      h = remaining;
      last = true;
    }
    if (h < 1e-15 * std::max(1.0, std::abs(t)))
      throw NumericError("ode: step size underflow");
    const double hs = dir * h;

    ytmp = y + hs * (a21 * k1);
    k2 = rhs(t + c2 * hs, ytmp);
    ytmp = y + hs * (a31 * k1 + a32 * k2);
    k3 = rhs(t + c3 * hs, ytmp);
    ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
    k4 = rhs(t + c4 * hs, ytmp);
    ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    k5 = rhs(t + c5 * hs, ytmp);
    ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    k6 = rhs(t + hs, ytmp);
    ynew = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    k7 = rhs(t + hs, ynew);

    OdeVec err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = detail::error_norm(err, y, ynew, opt);
    if (!std::isfinite(en)) throw NumericError("ode: non-finite error estimate");

    if (en <= 1.0) {
      seg.t0 = t;
      seg.h = hs;
      seg.r1 = y;
      seg.r2 = ynew - y;
      seg.r3 = hs * k1 - seg.r2;
      seg.r4 = seg.r2 - hs * k7 - seg.r3;
      seg.r5 = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      const double tn = last ? t_end : t + hs;
      seg.h = tn - t;
      ++res.steps;
      std::optional<double> stop = observe(static_cast<const DenseSegment&>(seg));
      if (stop) {
        res.t = *stop;
        res.y = (*stop == tn) ? ynew : seg.eval(*stop);
        res.stopped = true;
        return res;
      }
      t = tn;
      y = ynew;
      k1 = k7;
      if (last) break;
      const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      h = std::min(h * fac, opt.h_max);
    } else {
      ++res.rejected;
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
    }
  }
  res.t = t_end;
  res.y = y;
  return res;
}

template <class Rhs>
OdeResult integrate_dp45(Rhs&& rhs, double t0, const OdeVec& y0, double t_end,
                         const OdeOptions& opt) {
  return integrate_dp45(std::forward<Rhs>(rhs), t0, y0, t_end, opt,
                        [](const DenseSegment&) -> std::optional<double> { return std::nullopt; });
}

// Locate a root of `g` on [ta, tb] given sign(g(ta)) != sign(g(tb)).
// Returns the right end of the final bracket so that g has switched sign there.
template <class G>
double bisect_root(G&& g, double ta, double tb, double tol_t = 1e-14, double tol_g = 1e-13) {
  double ga = g(ta);
  for (int it = 0; it < 200; ++it) {
    const double tm = 0.5 * (ta + tb);
    if (tm == ta || tm == tb) break;
    const double gm = g(tm);
    if ((gm < 0) == (ga < 0)) {
      ta = tm;
      ga = gm;
    } else {
      tb = tm;
    }
    if (std::abs(tb - ta) < tol_t * std::max(1.0, std::abs(tb)) && std::abs(gm) < tol_g) break;
  }
  return tb;
}

}  // namespace ehsrb
