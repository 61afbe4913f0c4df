#include "ehsrb/curves.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ehsrb/errors.hpp"

namespace ehsrb {

std::shared_ptr<const SeedCurve> SeedCurve::segment(const Vec& start, const Vec& direction,
                                                    double length) {
  if (!(length > 0)) throw DomainError("seed segment needs positive length");
  if (direction.norm() == 0) throw DomainError("seed segment needs a direction");
  auto c = std::make_shared<SeedCurve>();
  const Vec d = direction / direction.norm();
  const Vec s = start;
  c->eval = [s, d](double sigma) {
    Vec z = s + sigma * d;
    z(0) = unit_angle(z(0));
    return std::make_pair(z, d);
  };
  c->length = length;
  return c;
}

double CurveChain::image_length() const {
  double acc = 0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    Vec d = samples[i].z - samples[i - 1].z;
    d(0) = wrap_angle(d(0));
    acc += d.norm();
  }
  return acc;
}

CurveChain make_chain(std::shared_ptr<const SeedCurve> seed, double lo, double hi,
                      std::size_t n, bool keep_history) {
  if (n < 2) throw PreconditionError("make_chain needs at least 2 samples");
  if (!(lo < hi) || lo < 0 || hi > seed->length * (1 + 1e-12))
    throw PreconditionError("make_chain: parameter interval outside the seed curve");
  CurveChain c;
  c.seed = seed;
  c.keep_history = keep_history;
  c.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    CurveSample s;
    s.sigma = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    std::tie(s.z, s.tangent) = seed->eval(s.sigma);
    if (keep_history) s.history.push_back(s.z);
    c.samples.push_back(std::move(s));
  }
  return c;
}

namespace {
void advance_sample(const System& sys, CurveSample& s, bool keep_history) {
  std::pair<Vec, Vec> r;
  try {
    r = sys.step_with_tangent(s.z, s.tangent);
  } catch (const DomainError& e) {
    throw IntegrityError(std::string("curve sample left the trapping region: ") + e.what());
  }
  const double nv = r.second.norm();
  if (!(nv > 0) || !std::isfinite(nv)) throw NumericError("degenerate tangent in evolve_curve");
  s.log_phi += std::log(nv);
  s.tangent = r.second / nv;
  s.z = sys.canonical(r.first);
  if (!sys.in_trapping_region(s.z)) throw IntegrityError("curve sample left the trapping region");
  if (keep_history) s.history.push_back(s.z);
}
}  // namespace

CurveSample transport(const System& sys, const SeedCurve& seed, double sigma, long steps,
                      bool keep_history) {
  CurveSample s;
  s.sigma = sigma;
  std::tie(s.z, s.tangent) = seed.eval(sigma);
  if (keep_history) {
    s.history.push_back(s.z);
    for (long k = 0; k < steps; ++k) advance_sample(sys, s, keep_history);
    return s;
  }
  try {
    const auto r = sys.iterate_with_tangent(s.z, s.tangent, steps);
    s.z = r.z;
    s.tangent = r.tangent;
    s.log_phi = r.log_stretch;
  } catch (const DomainError& e) {
    throw IntegrityError(std::string("curve sample left the trapping region: ") + e.what());
  }
  return s;
}

void refine_chain(const System& sys, CurveChain& chain, const EvolveOptions& opt) {
  if (!std::isfinite(opt.h_max) || chain.samples.empty()) return;
  std::vector<CurveSample> out;
  out.reserve(chain.samples.size());
  out.push_back(std::move(chain.samples.front()));
  std::vector<CurveSample> stack;
  const double sig_tol = 1e-14 * std::max(1.0, chain.seed->length);
  for (std::size_t i = 1; i < chain.samples.size(); ++i) {
    stack.push_back(std::move(chain.samples[i]));
    while (!stack.empty()) {
      const CurveSample& a = out.back();
      const CurveSample& b = stack.back();
      if (sys.distance(a.z, b.z) > opt.h_max && b.sigma - a.sigma > sig_tol) {
        stack.push_back(transport(sys, *chain.seed, 0.5 * (a.sigma + b.sigma), chain.steps,
                                  chain.keep_history));
        if (out.size() + stack.size() > opt.max_samples)
          throw IntegrityError("evolve_curve: sample budget exhausted");
      } else {
        out.push_back(std::move(stack.back()));
        stack.pop_back();
      }
    }
  }
  chain.samples = std::move(out);
}

void evolve_curve(const System& sys, CurveChain& chain, long n, const EvolveOptions& opt) {
  if (n < 0) throw PreconditionError("evolve_curve: n must be >= 0");
  if (chain.samples.empty()) return;
  for (long step = 0; step < n; ++step) {
    for (auto& s : chain.samples) advance_sample(sys, s, chain.keep_history);
    ++chain.steps;
    refine_chain(sys, chain, opt);
  }
}

CurveChain sub_chain(const CurveChain& c, std::size_t lo, std::size_t hi) {
  if (lo > hi || hi >= c.samples.size()) throw PreconditionError("sub_chain: bad index range");
  CurveChain s;
  s.seed = c.seed;
  s.steps = c.steps;
  s.keep_history = c.keep_history;
  s.samples.assign(c.samples.begin() + lo, c.samples.begin() + hi + 1);
  return s;
}

bool AdmissibleCurve::satisfies(const GeometryCaps& caps, double theta_bar) const {
  return is_graph && gamma_geom <= caps.gamma_bar && kappa <= caps.kappa_bar &&
         r <= caps.r_bar * (1 + 1e-9) && angle_GF >= theta_bar && u.size() >= 2;
}

namespace {

struct GraphFrame {
  Vec base, G;
  Mat F, Binv;
};

GraphFrame frame_at(const System& sys, const CurveSample& b) {
  GraphFrame f;
  const int d = sys.dim();
  f.base = b.z;
  f.G = b.tangent / b.tangent.norm();
  f.F = sys.stable_reference();
  Mat B(d, d);
  B.col(0) = f.G;
  B.rightCols(d - 1) = f.F;
  if (std::abs(B.determinant()) < 1e-12) throw GeometryError("tangent lies in the cross-section");
  f.Binv = B.inverse();
  return f;
}

// u, psi, dpsi of sample s in frame f.
void graph_coords(const System& sys, const GraphFrame& f, const CurveSample& s, double& u, Vec& psi,
                  Vec& dpsi) {
  const Vec c = f.Binv * sys.displacement(f.base, s.z);
  const Vec t = f.Binv * s.tangent;
  const int d = static_cast<int>(c.size());
  u = c(0);
  psi = c.tail(d - 1);
  dpsi = t(0) == 0 ? Vec(Vec::Constant(d - 1, std::numeric_limits<double>::infinity()))
                   : Vec(t.tail(d - 1) / t(0));
}

double holder_pair(const Vec& a, const Vec& b, double du, double alpha) {
  if (du <= 0) return a == b ? 0.0 : std::numeric_limits<double>::infinity();
  return (a - b).norm() / std::pow(du, alpha);
}

}  // namespace

AdmissibleCurve graph_view(const System& sys, const CurveChain& c, std::size_t lo, std::size_t hi,
                           std::size_t base_index, int stencil) {
  if (lo > hi || hi >= c.samples.size() || base_index < lo || base_index > hi)
    throw PreconditionError("graph_view: bad index range");
  AdmissibleCurve a;
  a.seed = c.seed;
  a.steps = c.steps;
  a.samples.assign(c.samples.begin() + lo, c.samples.begin() + hi + 1);
  a.base_index = base_index - lo;
  a.alpha = sys.spec().alpha;
  GraphFrame f = frame_at(sys, a.samples[a.base_index]);
  const std::size_t n = a.samples.size();
  a.u.resize(n);
  a.psi.resize(n);
  a.dpsi.resize(n);
  for (std::size_t i = 0; i < n; ++i) graph_coords(sys, f, a.samples[i], a.u[i], a.psi[i], a.dpsi[i]);
  if (n >= 2 && a.u.back() < a.u.front()) {
    // orient G along increasing sample order
    f.G = -f.G;
    for (std::size_t i = 0; i < n; ++i) {
      a.u[i] = -a.u[i];
      a.dpsi[i] = -a.dpsi[i];
    }
  }
  a.base = f.base;
  a.G = f.G;
  a.F = f.F;
  a.angle_GF = std::asin(std::min(1.0, std::abs(f.G(0))));
  a.is_graph = true;
  for (std::size_t i = 1; i < n; ++i)
    if (!(a.u[i] > a.u[i - 1])) a.is_graph = false;
  a.gamma_geom = 0;
  for (const Vec& d : a.dpsi) a.gamma_geom = std::max(a.gamma_geom, d.norm());
  a.kappa = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (int m = 0; m < stencil; ++m) {
      const std::size_t j = i + (std::size_t{1} << m);
      if (j >= n) break;
      a.kappa = std::max(a.kappa, holder_pair(a.dpsi[i], a.dpsi[j], std::abs(a.u[j] - a.u[i]), a.alpha));
    }
  a.r = n >= 2 ? std::min(-a.u.front(), a.u.back()) : 0.0;
  return a;
}

double holder_curvature(const System& sys, const std::vector<CurveSample>& s, double alpha,
                        int stencil) {
  const std::size_t n = s.size();
  std::vector<double> arc(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) arc[i] = arc[i - 1] + sys.distance(s[i - 1].z, s[i].z);
  double h = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (int m = 0; m < stencil; ++m) {
      const std::size_t j = i + (std::size_t{1} << m);
      if (j >= n) break;
      h = std::max(h, holder_pair(s[i].tangent, s[j].tangent, arc[j] - arc[i], alpha));
    }
  return h;
}

namespace {
std::size_t arc_midpoint(const System& sys, const CurveChain& c, std::size_t lo, std::size_t hi) {
  double total = 0;
  for (std::size_t i = lo + 1; i <= hi; ++i) total += sys.distance(c.samples[i - 1].z, c.samples[i].z);
  double acc = 0;
  for (std::size_t i = lo + 1; i <= hi; ++i) {
    acc += sys.distance(c.samples[i - 1].z, c.samples[i].z);
    if (acc >= 0.5 * total) return (acc - 0.5 * total) < 0.5 * sys.distance(c.samples[i - 1].z, c.samples[i].z) ? i : i - 1;
  }
  return (lo + hi) / 2;
}
}  // namespace

std::vector<AdmissibleCurve> trim_to_admissible(const System& sys, const CurveChain& c,
                                                const GeometryCaps& caps,
                                                std::optional<std::size_t> center) {
  std::vector<AdmissibleCurve> out;
  if (c.samples.size() < 2) return out;
  const double alpha = sys.spec().alpha;
  struct Task {
    std::size_t lo, hi, base;
  };
  std::vector<Task> tasks;
  const std::size_t last = c.samples.size() - 1;
  tasks.push_back({0, last, center.value_or(arc_midpoint(sys, c, 0, last))});
  if (tasks.back().base > last) throw PreconditionError("trim: center index out of range");
  while (!tasks.empty()) {
    const Task t = tasks.back();
    tasks.pop_back();
    if (t.hi <= t.lo) continue;
    GraphFrame f;
    try {
      f = frame_at(sys, c.samples[t.base]);
    } catch (const GeometryError&) {
      // tangent in the cross-section: drop the base sample
      if (t.base > t.lo) tasks.push_back({t.lo, t.base - 1, arc_midpoint(sys, c, t.lo, t.base - 1)});
      if (t.base < t.hi) tasks.push_back({t.base + 1, t.hi, arc_midpoint(sys, c, t.base + 1, t.hi)});
      continue;
    }
    const std::size_t n = t.hi - t.lo + 1;
    std::vector<double> u(n);
    std::vector<Vec> psi(n), dpsi(n);
    for (std::size_t i = 0; i < n; ++i) graph_coords(sys, f, c.samples[t.lo + i], u[i], psi[i], dpsi[i]);
    const std::size_t b = t.base - t.lo;
    auto holder_ok = [&](std::size_t j, std::size_t L, std::size_t R) {
      for (int m = 0; m < caps.holder_stencil; ++m) {
        const std::size_t step = std::size_t{1} << m;
        for (std::size_t k : {j + step, j - step}) {
          if ((k == j - step && step > j) || k < L || k > R) continue;
          if (holder_pair(dpsi[j], dpsi[k], std::abs(u[j] - u[k]), alpha) > caps.kappa_bar) return false;
        }
      }
      return true;
    };
    std::size_t L = b, R = b;
    // the graph grows in the direction of the tangent on the right
    while (R + 1 < n) {
      const std::size_t j = R + 1;
      if (!(u[j] > u[R]) || u[j] > caps.r_bar || dpsi[j].norm() > caps.gamma_bar ||
          !holder_ok(j, L, j))
        break;
      R = j;
    }
    while (L > 0) {
      const std::size_t j = L - 1;
      if (!(u[j] < u[L]) || -u[j] > caps.r_bar || dpsi[j].norm() > caps.gamma_bar ||
          !holder_ok(j, j, R))
        break;
      L = j;
    }
    if (R > L) out.push_back(graph_view(sys, c, t.lo + L, t.lo + R, t.base, caps.holder_stencil));
    const std::size_t gl = t.lo + L, gr = t.lo + R;
    // remainders; a piece that could not grow drops its base sample
    if (gl > t.lo) {
      const std::size_t e = (R == L) ? gl - 1 : gl - 1;
      if (e > t.lo) tasks.push_back({t.lo, e, arc_midpoint(sys, c, t.lo, e)});
    }
    if (gr < t.hi) {
      const std::size_t s = gr + 1;
      if (t.hi > s) tasks.push_back({s, t.hi, arc_midpoint(sys, c, s, t.hi)});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const AdmissibleCurve& a, const AdmissibleCurve& b) { return a.seed_lo() < b.seed_lo(); });
  return out;
}

CoverResult besicovitch_cover(const std::vector<Window>& w) {
  CoverResult res;
  std::vector<std::size_t> order(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (w[a].radius != w[b].radius) return w[a].radius > w[b].radius;
    return w[a].center < w[b].center;
  });
  for (std::size_t i : order) {
    bool covered = false;
    for (std::size_t s : res.selected)
      if (w[s].lo() <= w[i].center && w[i].center <= w[s].hi()) {
        covered = true;
        break;
      }
    if (!covered) res.selected.push_back(i);
  }
  std::vector<std::size_t> sel = res.selected;
  std::sort(sel.begin(), sel.end(), [&](std::size_t a, std::size_t b) {
    if (w[a].lo() != w[b].lo()) return w[a].lo() < w[b].lo();
    return a < b;
  });
  std::vector<double> class_end;
  for (std::size_t i : sel) {
    std::size_t k = 0;
    while (k < class_end.size() && !(class_end[k] < w[i].lo())) ++k;
    if (k == class_end.size()) {
      class_end.push_back(w[i].hi());
      res.classes.emplace_back();
    } else {
      class_end[k] = w[i].hi();
    }
    res.classes[k].push_back(i);
  }
  // sweep for the overlap multiplicity
  std::vector<std::pair<double, int>> ev;
  for (std::size_t i : sel) {
    ev.push_back({w[i].lo(), -1});  // openings sort first at equal coordinates
    ev.push_back({w[i].hi(), +1});
  }
  std::sort(ev.begin(), ev.end());
  int cur = 0;
  for (const auto& e : ev) {
    cur -= e.second;
    res.multiplicity = std::max(res.multiplicity, cur);
  }
  return res;
}

bool cover_is_valid(const std::vector<Window>& w, const CoverResult& c) {
  for (const Window& x : w) {
    bool hit = false;
    for (std::size_t s : c.selected)
      if (w[s].lo() <= x.center && x.center <= w[s].hi()) hit = true;
    if (!hit) return false;
  }
  std::size_t total = 0;
  for (const auto& cls : c.classes) {
    total += cls.size();
    for (std::size_t i = 0; i < cls.size(); ++i)
      for (std::size_t j = i + 1; j < cls.size(); ++j) {
        const Window& a = w[cls[i]];
        const Window& b = w[cls[j]];
        if (!(a.hi() < b.lo() || b.hi() < a.lo())) return false;
      }
  }
  return total == c.selected.size();
}

StandardPair standard_pair_from(const AdmissibleCurve& c) {
  StandardPair p;
  p.curve = c;
  const double base = c.samples[c.base_index].log_phi;
  p.rho.resize(c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) p.rho[i] = std::exp(base - c.samples[i].log_phi);
  return p;
}

Json StandardPairReport::to_json() const {
  return Json{{"geometry", geometry},
              {"backward_contraction", backward_contraction},
              {"density_bounds", density_bounds},
              {"density_holder", density_holder},
              {"stable_control", stable_control},
              {"measured_C", measured_C},
              {"rho_min", rho_min},
              {"rho_max", rho_max},
              {"rho_holder", rho_holder},
              {"stable_fraction", stable_fraction}};
}

StandardPairReport verify_standard_pair(const System& sys, const ConeField& field,
                                        const StandardPair& pair, const StandardPairChecks& k) {
  const AdmissibleCurve& c = pair.curve;
  const std::size_t n = c.samples.size();
  const long N = c.steps;
  if (n < 2) throw PreconditionError("standard pair needs at least 2 samples");
  for (const auto& s : c.samples)
    if (static_cast<long>(s.history.size()) != N + 1)
      throw PreconditionError("verify_standard_pair: backward orbit data was not retained");
  StandardPairReport r;
  r.geometry = c.satisfies(k.caps);

  // (ii) backward contraction on sample pairs
  r.measured_C = 0;
  const int np = std::max(1, k.n_pairs);
  for (int p = 0; p < np; ++p) {
    const std::size_t i = (static_cast<std::size_t>(p) * (n - 1)) / static_cast<std::size_t>(np);
    const std::size_t j = std::min(n - 1, i + std::max<std::size_t>(1, (n - 1) / (2 * np) + 1));
    if (i == j) continue;
    const double dN = sys.distance(c.samples[i].history[N], c.samples[j].history[N]);
    if (!(dN > 0)) continue;
    for (long t = 0; t <= N; ++t) {
      const double dt = sys.distance(c.samples[i].history[t], c.samples[j].history[t]);
      r.measured_C = std::max(r.measured_C, dt * std::exp(k.lambda_bar * (N - t)) / dN);
    }
  }
  r.backward_contraction = r.measured_C <= k.C;

  // (iii) density
  r.rho_min = *std::min_element(pair.rho.begin(), pair.rho.end());
  r.rho_max = *std::max_element(pair.rho.begin(), pair.rho.end());
  r.density_bounds = r.rho_min >= 1.0 / k.L && r.rho_max <= k.L;
  std::vector<double> arc(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) arc[i] = arc[i - 1] + sys.distance(c.samples[i - 1].z, c.samples[i].z);
  r.rho_holder = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (int m = 0; m < k.caps.holder_stencil; ++m) {
      const std::size_t j = i + (std::size_t{1} << m);
      if (j >= n) break;
      const double ds = arc[j] - arc[i];
      if (ds > 0) r.rho_holder = std::max(r.rho_holder, std::abs(pair.rho[i] - pair.rho[j]) / std::pow(ds, c.alpha));
    }
  r.density_holder = r.rho_holder <= k.L;

  // (iv) stable control over the last q iterates, weighted by leaf volume
  double total = 0, good = 0;
  const int q = std::min<long>(k.q, N);
  const double logC = std::log(k.C_stable);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 * ((i > 0 ? arc[i] - arc[i - 1] : 0.0) + (i + 1 < n ? arc[i + 1] - arc[i] : 0.0));
    total += w;
    const Cone ks = field.at(c.samples[i].history[N]).stable;
    Mat M = Mat::Identity(sys.dim(), sys.dim());
    bool ok = logC <= 1e-15;
    for (int kk = 1; kk <= q && ok; ++kk) {
      M = sys.jacobian(c.samples[i].history[N - kk]).inverse() * M;
      ok = min_log_stretch(M, ks, 32) >= logC + k.lambda_bar * kk;
    }
    if (ok) good += w;
  }
  r.stable_fraction = total > 0 ? good / total : 0.0;
  r.stable_control = r.stable_fraction >= k.beta;
  return r;
}

}  // namespace ehsrb
