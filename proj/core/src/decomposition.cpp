#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ehsrb/curves.hpp"
#include "ehsrb/errors.hpp"

namespace ehsrb {

Json CurvePiece::to_json() const {
  return Json{{"parent", parent},     {"sigma_lo", sigma_lo}, {"sigma_hi", sigma_hi},
              {"tau", tau},           {"image_length", image_length}, {"merges", merges},
              {"residual", residual}, {"image_outside_z", image_outside_z}};
}

namespace {

struct Level {
  double lo, hi;
  long tau;
  bool residual = false;
  int merges = 0;
  double length = 0.0;
  bool outside = true;
  CurveChain image;
};

Level make_level(double lo, double hi, long tau, bool residual = false) {
  Level l;
  l.lo = lo;
  l.hi = hi;
  l.tau = tau;
  l.residual = residual;
  return l;
}

long tau_at(const System& sys, const CurveChain& c, double sigma, long cap) {
  const CurveSample s = transport(sys, *c.seed, sigma, c.steps);
  const long t = sys.first_exit(s.z, cap);
  return std::min(t, cap + 1);
}

CurveChain piece_image(const System& sys, const CurveChain& c, double lo, double hi, long tau,
                       const DecompositionParams& p) {
  CurveChain img;
  img.seed = c.seed;
  img.steps = c.steps + tau;
  const std::size_t n = std::max<std::size_t>(2, p.image_samples);
  for (std::size_t i = 0; i < n; ++i)
    img.samples.push_back(
        transport(sys, *c.seed, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1), img.steps));
  EvolveOptions eo;
  eo.h_max = p.h_max;
  refine_chain(sys, img, eo);
  return img;
}

void measure(const System& sys, const CurveChain& c, Level& l, const DecompositionParams& p) {
  if (l.residual) return;
  l.image = piece_image(sys, c, l.lo, l.hi, l.tau, p);
  l.length = l.image.image_length();
  // pieces are open: the endpoints map onto the boundary of Z
  const auto& im = l.image.samples;
  l.outside = im.size() < 3 || std::none_of(im.begin() + 1, im.end() - 1,
                                            [&](const CurveSample& s) { return sys.in_z(s.z); });
}

}  // namespace

std::vector<CurvePiece> admissible_decomposition(const System& sys, const CurveChain& curve,
                                                 const DecompositionParams& p, long parent,
                                                 bool keep_images) {
  if (curve.samples.size() < 2) throw PreconditionError("decomposition needs a sampled curve");
  const double len = curve.image_length();
  const double eps = p.epsilon;
  if (len < eps * (1 - 1e-9) || len > 2 * eps * (1 + 1e-9))
    throw PreconditionError("curve length outside [epsilon, 2 epsilon]");
  const Cone ku = reference_cones(sys.dim(), p.cone_half_angle).unstable;
  for (const auto& s : curve.samples) {
    if (sys.in_z(s.z)) throw PreconditionError("curve meets Z");
    if (!ku.contains(s.tangent, 1e-12)) throw PreconditionError("curve tangent leaves the unstable cone");
  }
  if (holder_curvature(sys, curve.samples, sys.spec().alpha) > p.holder_L)
    throw PreconditionError("curve Holder curvature above the class bound");

  const long cap = std::min(p.max_resolved_tau, p.max_return);

  // tau on a grid refined until consecutive values differ by at most one
  std::vector<std::pair<double, long>> g;
  for (const auto& s : curve.samples) g.push_back({s.sigma, std::min(sys.first_exit(s.z, cap), cap + 1)});
  for (std::size_t i = 0; i + 1 < g.size();) {
    const auto [sa, ta] = g[i];
    const auto [sb, tb] = g[i + 1];
    if (std::abs(ta - tb) > 1 && sb - sa > p.boundary_tol) {
      const double m = 0.5 * (sa + sb);
      g.insert(g.begin() + static_cast<long>(i) + 1, {m, tau_at(sys, curve, m, cap)});
    } else {
      ++i;
    }
  }

  // runs of equal tau, boundaries bisected
  std::vector<Level> lv;
  double run_lo = g.front().first;
  for (std::size_t i = 0; i + 1 < g.size(); ++i) {
    if (g[i].second == g[i + 1].second) continue;
    double a = g[i].first, b = g[i + 1].first;
    while (b - a > p.boundary_tol) {
      const double m = 0.5 * (a + b);
      if (tau_at(sys, curve, m, cap) == g[i].second) a = m; else b = m;
      if (m == a && m == b) break;
    }
    const double cut = 0.5 * (a + b);
    lv.push_back(make_level(run_lo, cut, g[i].second, g[i].second > cap));
    run_lo = cut;
  }
  lv.push_back(make_level(run_lo, g.back().first, g.back().second, g.back().second > cap));
  for (auto& l : lv) measure(sys, curve, l, p);

  // merge short pieces into the deeper neighbour
  for (;;) {
    std::size_t worst = lv.size();
    for (std::size_t i = 0; i < lv.size(); ++i)
      if (!lv[i].residual && lv[i].length < eps && (worst == lv.size() || lv[i].length < lv[worst].length))
        worst = i;
    if (worst == lv.size() || lv.size() == 1) break;
    const bool has_l = worst > 0 && !lv[worst - 1].residual;
    const bool has_r = worst + 1 < lv.size() && !lv[worst + 1].residual;
    if (!has_l && !has_r) break;
    std::size_t nb;
    if (has_l && has_r) {
      nb = lv[worst - 1].tau > lv[worst + 1].tau ? worst - 1
           : lv[worst + 1].tau > lv[worst - 1].tau ? worst + 1
           : (lv[worst - 1].length <= lv[worst + 1].length ? worst - 1 : worst + 1);
    } else {
      nb = has_l ? worst - 1 : worst + 1;
    }
    const std::size_t a = std::min(worst, nb), b = std::max(worst, nb);
    Level m = make_level(lv[a].lo, lv[b].hi, std::max(lv[a].tau, lv[b].tau) + 1);
    m.merges = lv[a].merges + lv[b].merges + 1;
    if (m.merges > p.merge_cap) throw DiagnosticsError("decomposition: merge cap exceeded");
    measure(sys, curve, m, p);
    lv[a] = std::move(m);
    lv.erase(lv.begin() + static_cast<long>(b));
  }

  // split long pieces into equal image-length parts
  std::vector<Level> out;
  for (auto& l : lv) {
    if (l.residual || l.length <= 2 * eps) {
      out.push_back(std::move(l));
      continue;
    }
    const int k = static_cast<int>(std::ceil(l.length / (2 * eps)));
    const auto& s = l.image.samples;
    std::vector<double> arc(s.size(), 0.0);
    for (std::size_t i = 1; i < s.size(); ++i) arc[i] = arc[i - 1] + sys.distance(s[i - 1].z, s[i].z);
    std::vector<double> cuts{l.lo};
    std::size_t j = 1;
    for (int q = 1; q < k; ++q) {
      const double target = arc.back() * q / k;
      while (j + 1 < s.size() && arc[j] < target) ++j;
      const double w = arc[j] > arc[j - 1] ? (target - arc[j - 1]) / (arc[j] - arc[j - 1]) : 0.0;
      cuts.push_back(s[j - 1].sigma + w * (s[j].sigma - s[j - 1].sigma));
    }
    cuts.push_back(l.hi);
    for (int q = 0; q < k; ++q) {
      Level part = make_level(cuts[q], cuts[q + 1], l.tau);
      part.merges = l.merges;
      measure(sys, curve, part, p);
      out.push_back(std::move(part));
    }
  }

  std::vector<CurvePiece> pieces;
  for (auto& l : out) {
    CurvePiece c;
    c.parent = parent;
    c.sigma_lo = l.lo;
    c.sigma_hi = l.hi;
    c.tau = l.tau;
    c.image_length = l.length;
    c.merges = l.merges;
    c.residual = l.residual;
    c.image_outside_z = l.outside;
    if (keep_images) c.image = std::move(l.image);
    pieces.push_back(std::move(c));
  }
  return pieces;
}

IntHistogram return_time_histogram(const System& sys, const CurveChain& curve, long n_points,
                                   unsigned long long seed, long max_return, long* unresolved) {
  if (n_points <= 0) throw PreconditionError("histogram needs n_points > 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double lo = curve.samples.front().sigma, hi = curve.samples.back().sigma;
  IntHistogram h;
  long bad = 0;
  for (long i = 0; i < n_points; ++i) {
    const double sigma = lo + (hi - lo) * (static_cast<double>(i) + U(rng)) / static_cast<double>(n_points);
    const Vec z = curve.steps == 0 ? curve.seed->eval(sigma).first
                                   : transport(sys, *curve.seed, sigma, curve.steps).z;
    const long t = sys.first_exit(z, max_return);
    if (t > max_return) ++bad;
    h[t] += 1.0;
  }
  if (unresolved) *unresolved = bad;
  return h;
}

void write_histogram_csv(std::ostream& os, const IntHistogram& counts, const IntHistogram& mass) {
  CsvWriter w(os);
  w.row({"t", "count", "mass"});
  for (const auto& [t, c] : counts) {
    const auto it = mass.find(t);
    w.field(static_cast<long long>(t)).field(c).field(it == mass.end() ? 0.0 : it->second);
    w.end_row();
  }
}

TailFit return_time_tail_fit(const IntHistogram& h, double t_min, double t_max,
                             int bins_per_decade, long min_occupied, double min_bin_count) {
  if (!(t_min >= 1) || !(t_max > t_min) || bins_per_decade < 1)
    throw PreconditionError("tail fit: bad range");
  TailFit f;
  f.t_min = t_min;
  f.t_max = t_max;
  for (const auto& [t, c] : h)
    if (t >= t_min && t <= t_max && c > 0) ++f.occupied;
  if (f.occupied < min_occupied)
    throw StatisticsError("tail fit: only " + std::to_string(f.occupied) + " occupied values in range");
  std::vector<double> x, y;
  const double step = std::pow(10.0, 1.0 / bins_per_decade);
  const double top = std::min(t_max, static_cast<double>(h.rbegin()->first));
  for (double a = t_min; a <= top; a *= step) {
    const long i0 = static_cast<long>(std::ceil(a));
    const long last = a * step > top ? static_cast<long>(std::floor(top))
                                     : static_cast<long>(std::ceil(a * step)) - 1;  // [a, a*step)
    if (last < i0) continue;
    double cnt = 0;
    for (auto it = h.lower_bound(i0); it != h.end() && it->first <= last; ++it) cnt += it->second;
    if (cnt <= 0 || cnt < min_bin_count) continue;
    const double nint = static_cast<double>(last - i0 + 1);
    // mean of log t over the integers of the bin
    const double logmean = (std::lgamma(last + 1.0) - std::lgamma(static_cast<double>(i0))) / nint;
    x.push_back(logmean);
    y.push_back(std::log(cnt / nint));
  }
  f.bins = static_cast<long>(x.size());
  f.fit = linear_regression(x, y);
  f.exponent = -f.fit.slope;
  f.ci_lo = -f.fit.slope_hi;
  f.ci_hi = -f.fit.slope_lo;
  return f;
}

DistortionSample distortion_ratio(const System& sys, const CurveChain& curve, const CurvePiece& piece,
                                  double sigma_x, double sigma_y) {
  for (double s : {sigma_x, sigma_y})
    if (s < piece.sigma_lo || s > piece.sigma_hi) throw DomainError("distortion: point outside the piece");
  auto push = [&](double sigma) {
    const CurveSample s = transport(sys, *curve.seed, sigma, curve.steps);
    const auto r = sys.iterate_with_tangent(s.z, s.tangent, piece.tau);
    return std::make_pair(r.z, r.log_stretch);
  };
  const auto [zx, lx] = push(sigma_x);
  if (sigma_x == sigma_y) return {0.0, 0.0};
  const auto [zy, ly] = push(sigma_y);
  return {lx - ly, sys.distance(zx, zy)};
}

}  // namespace ehsrb
