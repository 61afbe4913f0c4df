#include "ehsrb/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ehsrb/errors.hpp"

namespace ehsrb {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

template <class F>
double trapz(const FlowTrace& tr, double t1, double t2, F&& f) {
  if (t2 < t1) throw PreconditionError("integration interval reversed");
  if (t1 < 0 || t2 > tr.exit_time * (1 + 1e-12) + 1e-12) throw PreconditionError("interval outside the trace");
  if (t1 == t2) return 0.0;
  double acc = 0, tp = t1, fp = f(tr.sample_at(t1));
  for (const auto& s : tr.samples) {
    if (s.t <= t1 || s.t >= t2) continue;
    const double fv = f(s);
    acc += 0.5 * (s.t - tp) * (fv + fp);
    tp = s.t;
    fp = fv;
  }
  const double fe = f(tr.sample_at(t2));
  acc += 0.5 * (t2 - tp) * (fe + fp);
  return acc;
}

// Consecutive grid triplets with equal spacing h.
template <class F>
void grid_triplets(const FlowTrace& tr, F&& f) {
  std::vector<const TraceSample*> g;
  for (const auto& s : tr.samples)
    if (s.on_grid) g.push_back(&s);
  const double h = tr.sample_spacing;
  for (std::size_t i = 1; i + 1 < g.size(); ++i) {
    const double a = g[i]->t - g[i - 1]->t, b = g[i + 1]->t - g[i]->t;
    if (std::abs(a - h) > 1e-9 * h || std::abs(b - h) > 1e-9 * h) continue;
    f(*g[i - 1], *g[i], *g[i + 1], h);
  }
}

void require_full_passage(const FlowTrace& tr) {
  const double r0 = tr.params.r0;
  if (tr.exit_time <= 0 || tr.samples.size() < 3 ||
      std::abs(tr.front().norm_x - r0) > 1e-9 * r0 || std::abs(tr.back().norm_x - r0) > 1e-9 * r0)
    throw PreconditionError("trace is not a full passage through Y");
}

}  // namespace

double check_tantheta_law(const FlowTrace& tr, double t1, double t2) {
  if (tr.front().tan_theta == 0.0) throw DegenerateInputError("theta identically 0; use the axis law");
  if (t1 > t2) throw PreconditionError("t1 must not exceed t2");
  const TraceSample a = tr.sample_at(t1);
  if (!(a.tan_theta > 0)) throw PreconditionError("tan theta(t1) must be positive");
  if (t1 == t2) return 0.0;
  const PassageParams& p = tr.params;
  const double J = p.lambda() * trapz(tr, t1, t2, [&](const TraceSample& s) { return std::pow(s.norm_x, p.alpha); });
  const double b = tr.sample_at(t2).tan_theta;
  return std::abs(b - std::exp(-J) * a.tan_theta) / a.tan_theta;
}

RadialResidual check_radial_ode(const FlowTrace& tr) {
  if (tr.samples.size() < 10) throw PreconditionError("radial check needs at least 10 samples");
  const PassageParams& p = tr.params;
  RadialResidual r;
  grid_triplets(tr, [&](const TraceSample& a, const TraceSample& m, const TraceSample& b, double h) {
    const double fd = (std::pow(b.norm_x, -p.alpha) - std::pow(a.norm_x, -p.alpha)) / (2 * h);
    const double sign = tr.backward ? -1.0 : 1.0;
    const double res = std::abs(fd - sign * p.alpha * p.xi(m.tan_theta));
    r.max_abs = std::max(r.max_abs, res);
    ++r.points;
  });
  const double h = tr.sample_spacing;
  r.scaled = h > 0 ? r.max_abs / (h * h) : 0.0;
  return r;
}

ChevronResult check_chevron_bounds(const FlowTrace& tr, double kappa) {
  require_full_passage(tr);
  if (!(kappa > 0 && kappa < 1)) throw PreconditionError("kappa must lie in (0, 1)");
  const PassageParams& p = tr.params;
  const double T0 = tr.exit_time;
  const double y0 = std::pow(p.r0, -p.alpha);
  ChevronResult c;
  c.upper_violation = -kInf;
  c.beta_fit = kInf;
  c.gamma_fit = kInf;
  for (const auto& s : tr.samples) {
    const double y = std::pow(s.norm_x, -p.alpha);
    const double t = s.t;
    if (t <= kappa * T0) {
      c.upper_violation = std::max(c.upper_violation, y - (y0 + p.alpha * p.beta * t));
      if (t > 0) c.beta_fit = std::min(c.beta_fit, (y - y0) / (p.alpha * t));
    }
    if (t >= kappa * T0) {
      c.upper_violation = std::max(c.upper_violation, y - (y0 + p.alpha * p.gamma * (T0 - t)));
      if (t < T0) c.gamma_fit = std::min(c.gamma_fit, (y - y0) / (p.alpha * (T0 - t)));
    }
  }
  c.upper_ok = c.upper_violation <= 1e-9 * y0;
  c.max_second_difference = -kInf;
  bool concave = true;
  grid_triplets(tr, [&](const TraceSample& a, const TraceSample& m, const TraceSample& b, double) {
    const double ya = std::pow(a.norm_x, -p.alpha), ym = std::pow(m.norm_x, -p.alpha),
                 yb = std::pow(b.norm_x, -p.alpha);
    const double d2 = ya - 2 * ym + yb;
    c.max_second_difference = std::max(c.max_second_difference, d2);
    if (d2 > 1e-9 * std::max(1.0, ym)) concave = false;  // dense-output noise floor
  });
  c.concave = concave;
  return c;
}

double locate_tan_theta(const FlowTrace& tr, double s) {
  const double a0 = tr.front().tan_theta, b0 = tr.back().tan_theta;
  if (!(b0 < s && s < a0)) throw PreconditionError("s outside (tan theta(T0), tan theta(0))");
  double a = 0, b = tr.exit_time;
  while (b - a > 1e-10) {
    const double m = 0.5 * (a + b);
    if (m <= a || m >= b) break;
    if (tr.tan_theta_at(m) > s) a = m; else b = m;
  }
  return 0.5 * (a + b);
}

TsResult check_ts_bounds(const FlowTrace& tr, double s) {
  const PassageParams& p = tr.params;
  TsResult r;
  r.T0 = tr.exit_time;
  r.Ts = locate_tan_theta(tr, s);
  r.upper = s * s > p.gamma / p.beta;
  if (r.upper) {
    const double chi = p.gamma / p.lambda() * (1 + 1 / (s * s));
    r.bound = chi * r.T0;
    r.margin = r.bound - r.Ts;
  } else {
    const double chi2 = (p.gamma - p.beta * s * s) / p.lambda();
    r.bound = chi2 * r.T0;
    r.margin = r.Ts - r.bound;
  }
  r.holds = r.margin >= -1e-9;
  return r;
}

TanRhoResult check_tanrho_bounds(const FlowTrace& tr, double tol) {
  const PassageParams& p = tr.params;
  const double cap = 0.5 * p.alpha;
  const double rho0 = tr.front().tan_rho;
  if (!(rho0 <= cap * (1 + 1e-12))) throw PreconditionError("v0 outside the unstable cone");
  TanRhoResult r;
  const double th0 = tr.front().tan_theta;
  if (th0 <= 1)
    r.T1 = 0;
  else if (tr.back().tan_theta >= 1)
    r.T1 = tr.exit_time;
  else
    r.T1 = locate_tan_theta(tr, 1.0);
  const TraceSample s1 = tr.sample_at(r.T1);
  r.cone_margin = kInf;
  r.envelope_margin = kInf;
  for (const auto& s : tr.samples) {
    r.max_tan_rho = std::max(r.max_tan_rho, s.tan_rho);
    r.cone_margin = std::min(r.cone_margin, cap - s.tan_rho);
    double env;
    if (s.t <= r.T1)
      env = rho0 * std::exp(-s.J) + cap * std::exp(-(s1.J - s.J));
    else
      env = (s1.tan_rho + p.alpha * (s.J - s1.J)) * std::exp(-(s.J - s1.J));
    r.envelope_margin = std::min(r.envelope_margin, env - s.tan_rho);
  }
  r.cone_ok = r.cone_margin >= -tol;
  r.envelope_ok = r.envelope_margin >= -tol;
  return r;
}

CotRhoResult check_cotrho_backward(const FlowTrace& tr, double tol) {
  const double cap = 0.5 * tr.params.alpha;
  auto cot = [](const TraceSample& s) { return s.tan_rho == 0 ? kInf : 1.0 / s.tan_rho; };
  if (!(cot(tr.front()) <= cap * (1 + 1e-12))) throw PreconditionError("v0 outside the stable cone");
  CotRhoResult r;
  for (const auto& s : tr.samples) r.max_cot_rho = std::max(r.max_cot_rho, cot(s));
  r.ok = r.max_cot_rho <= cap + tol;
  return r;
}

double integral_tan_rho(const FlowTrace& tr, double t1, double t2) {
  const double a = tr.params.alpha;
  return trapz(tr, t1, t2, [a](const TraceSample& s) { return std::pow(s.norm_x, a) * s.tan_rho; });
}

double integral_tan_theta(const FlowTrace& tr, double t1, double t2) {
  const double a = tr.params.alpha;
  return trapz(tr, t1, t2, [a](const TraceSample& s) { return std::pow(s.norm_x, a) * s.tan_theta; });
}

ExpansionResult expansion_along_passage(const FlowTrace& tr, double s_factor) {
  require_full_passage(tr);
  const PassageParams& p = tr.params;
  if (!(tr.front().tan_rho <= 0.5 * p.alpha * (1 + 1e-12))) throw PreconditionError("v0 outside the unstable cone");
  const PassageFlow flow(p);
  ExpansionResult e;
  e.log_expansion = tr.back().log_expansion;
  e.direct = std::log(tr.back().v.norm() / tr.front().v.norm());
  e.identity_error = std::abs(e.log_expansion - e.direct);
  e.min_running = 0;
  e.min_rate = kInf;
  for (const auto& s : tr.samples) {
    e.min_running = std::min(e.min_running, s.log_expansion);
    const Vec vh = s.v / s.v.norm();
    e.min_rate = std::min(e.min_rate, vh.dot(flow.field_jacobian(s.x) * vh));
  }
  const double s = s_factor * std::sqrt(p.gamma / p.beta);
  const double T0 = tr.exit_time;
  if (tr.front().tan_theta <= s)
    e.t0 = 0;
  else if (tr.back().tan_theta >= s)
    e.t0 = T0;
  else
    e.t0 = locate_tan_theta(tr, s);
  e.escaping_term = (1 + 1 / p.alpha) * std::log1p(std::pow(p.r0, p.alpha) * p.gamma * p.alpha * (T0 - e.t0));
  return e;
}

double axis_log_expansion(const PassageParams& p, double a) { return (1 + p.alpha) * std::log(p.r0 / a); }

double axis_gamma_integral(const PassageParams& p, double a) {
  return (1 / p.alpha) * std::log(std::pow(a, -p.alpha) / std::pow(p.r0, -p.alpha));
}

PairDistortion pair_distortion_through_Z(const PassageFlow& flow, const Vec& x, const Vec& y,
                                         const Vec& v, const Vec& w, double sample_dt) {
  const PassageParams& p = flow.params();
  if (x.norm() > p.r0 * (1 + 1e-12) || y.norm() > p.r0 * (1 + 1e-12))
    throw DomainError("pair distortion: points must lie in Y");
  TraceOptions o;
  o.sample_dt = sample_dt;
  const FlowTrace tx = flow.trace(x, v, o);
  const FlowTrace ty = flow.trace(y, w, o);
  PairDistortion d;
  d.T0x = tx.exit_time;
  d.T0y = ty.exit_time;
  // common time one unit past the first exit, as for two points of one piece
  d.T = d.T0x + 1;
  const auto [xb, vb] = flow.advance_with_tangent(x, v, d.T);
  const auto [yb, wb] = flow.advance_with_tangent(y, w, d.T);
  d.delta_log_expansion = std::abs(std::log(vb.norm() / v.norm()) - std::log(wb.norm() / w.norm()));
  d.image_distance = (xb - yb).norm();
  if (x == y) return d;
  const double da = std::pow(d.image_distance, p.alpha);
  d.constant = da > 0 ? d.delta_log_expansion / da : 0.0;
  const double Tm = std::min(d.T0x, d.T0y);
  auto eta = [&](const TraceSample& a, const TraceSample& b) {
    return (a.v / a.v.norm() - b.v / b.v.norm()).norm();
  };
  d.eta0 = eta(tx.front(), ty.front());
  for (const auto& s : tx.samples) {
    if (s.t > Tm) break;
    const double env = std::pow(d.T, -(p.alpha + 1)) * std::pow(1 - s.t / d.T, 1 / p.alpha) + 1 / (d.T - s.t);
    if (da > 0) d.eta_constant = std::max(d.eta_constant, eta(s, ty.sample_at(s.t)) / (env * da));
  }
  return d;
}

Vec entry_point(const PassageParams& p, double theta0, const Vec& stable_dir) {
  Vec x(p.dim);
  x(0) = p.r0 * std::cos(theta0);
  const Vec e = stable_dir / stable_dir.norm();
  for (int i = 1; i < p.dim; ++i) x(i) = p.r0 * std::sin(theta0) * e(i - 1);
  return x;
}

std::pair<double, double> entry_angles_for(const PassageFlow& flow, double T_lo, double T_hi) {
  const PassageParams& p = flow.params();
  if (!(T_lo > 0 && T_hi > T_lo)) throw PreconditionError("need 0 < T_lo < T_hi");
  Vec e = Vec::Zero(p.dim - 1);
  e(0) = 1;
  auto T = [&](double th) {
    try {
      return flow.exit_time(entry_point(p, th, e), 4 * T_hi + 100);
    } catch (const HorizonError&) {
      return kInf;
    }
  };
  const double lo = std::atan(std::sqrt(p.gamma / p.beta)), hi = 0.5 * kPi;
  auto solve = [&](double target) {
    double a = lo, b = hi;
    for (int k = 0; k < 200 && b - a > 1e-15; ++k) {
      const double m = 0.5 * (a + b);
      if (T(m) < target) a = m; else b = m;
    }
    return 0.5 * (a + b);
  };
  return {solve(T_lo), solve(T_hi)};
}

Json LawResult::to_json() const {
  auto num = [](double x) { return std::isfinite(x) ? Json(x) : Json(format_double(x)); };
  return Json{{"law", law},
              {"n_traces", n_traces},
              {"max_residual", num(max_residual)},
              {"violations", violations},
              {"fitted_constants", fitted_constants},
              {"T0_bins", T0_bins},
              {"pass", pass}};
}

LawResult uniformity_law(const std::string& name, const std::vector<double>& bins,
                         const std::vector<std::vector<double>>& batch_max) {
  LawResult r;
  r.law = name;
  std::vector<double> x, y;
  for (std::size_t b = 0; b < bins.size(); ++b) {
    double mx = -kInf;
    for (double v : batch_max[b]) {
      x.push_back(bins[b]);
      y.push_back(v);
      mx = std::max(mx, v);
    }
    r.T0_bins.push_back(Json{{"T0", bins[b]}, {"max", mx}, {"batch_maxima", batch_max[b]}});
    r.max_residual = std::max(r.max_residual, mx);
  }
  const LinearFit f = linear_regression(x, y);
  r.n_traces = static_cast<long>(x.size());
  r.fitted_constants = Json{{"max", r.max_residual}, {"slope", f.slope}, {"slope_lo", f.slope_lo},
                            {"slope_hi", f.slope_hi}, {"level", f.level}};
  r.pass = std::isfinite(r.max_residual) && f.ci_contains(0.0);
  return r;
}

namespace {

Vec random_stable_dir(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0, 1);
  Vec e(dim - 1);
  do {
    for (int i = 0; i < dim - 1; ++i) e(i) = N(rng);
  } while (e.norm() < 1e-8);
  return e / e.norm();
}

// Tangent with |v_s| / |v_u| = slope, v_u = 1.
Vec cone_vector(int dim, double slope, std::mt19937_64& rng) {
  Vec v(dim);
  v(0) = 1;
  const Vec e = random_stable_dir(dim, rng);
  for (int i = 1; i < dim; ++i) v(i) = slope * e(i - 1);
  return v;
}

LawResult counted(const std::string& law, long n, long viol, double maxres) {
  LawResult r;
  r.law = law;
  r.n_traces = n;
  r.violations = viol;
  r.max_residual = maxres;
  r.pass = viol == 0;
  return r;
}

}  // namespace

std::vector<LawResult> run_residual_laws(const PassageParams& p, const OracleConfig& c,
                                         const OdeOptions& ode) {
  const PassageFlow flow(p, ode);
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> U(0, 1);
  const auto [tha, thb] = entry_angles_for(flow, c.T_lo, c.T_hi);
  const double cap = 0.5 * p.alpha;
  const double s_hi = 2 * std::sqrt(p.gamma / p.beta), s_lo = 0.5 * std::sqrt(p.gamma / p.beta);
  const double floor = c.floor_factor * std::min(p.beta, p.gamma);

  long n = 0, v_tan = 0, v_rad = 0, v_up = 0, v_conc = 0, v_ts_hi = 0, v_ts_lo = 0, v_l74 = 0,
       v_cone = 0, v_env = 0, v_back = 0, v_id = 0, v_exit = 0, v_mono = 0, n_ts_hi = 0, n_ts_lo = 0;
  double m_tan = 0, m_rad = 0, m_rad_scaled = 0, m_up = -kInf, beta_fit = kInf, gamma_fit = kInf,
         m_ts_hi = kInf, m_ts_lo = kInf, m_l74 = kInf, m_cone = kInf, m_env = kInf, m_back = 0,
         m_id = 0, m_exit = 0, q5 = -kInf;
  for (long i = 0; i < c.n_traces; ++i) {
    const double th = tha + (thb - tha) * U(rng);
    const Vec x0 = entry_point(p, th, random_stable_dir(p.dim, rng));
    const Vec v0 = cone_vector(p.dim, cap, rng);
    TraceOptions fo;
    fo.sample_dt = c.fine_dt;
    const FlowTrace tr = flow.trace(x0, v0, fo);
    ++n;
    const double T0 = tr.exit_time;
    double ta = U(rng) * T0, tb = U(rng) * T0;
    if (ta > tb) std::swap(ta, tb);
    const double res = std::max(check_tantheta_law(tr, 0, T0), check_tantheta_law(tr, ta, tb));
    m_tan = std::max(m_tan, res);
    v_tan += res >= c.tan_tol;
    const RadialResidual rr = check_radial_ode(tr);
    m_rad = std::max(m_rad, rr.max_abs);
    m_rad_scaled = std::max(m_rad_scaled, rr.scaled);
    v_rad += rr.max_abs >= c.radial_tol;
    const ChevronResult ch = check_chevron_bounds(tr, c.kappa);
    m_up = std::max(m_up, ch.upper_violation);
    v_up += !ch.upper_ok;
    v_conc += !ch.concave;
    beta_fit = std::min(beta_fit, ch.beta_fit);
    gamma_fit = std::min(gamma_fit, ch.gamma_fit);
    for (double s : {s_hi, s_lo}) {
      if (!(tr.back().tan_theta < s && s < tr.front().tan_theta)) continue;
      const TsResult ts = check_ts_bounds(tr, s);
      if (ts.upper) {
        ++n_ts_hi;
        v_ts_hi += !ts.holds;
        m_ts_hi = std::min(m_ts_hi, ts.margin);
      } else {
        ++n_ts_lo;
        v_ts_lo += !ts.holds;
        m_ts_lo = std::min(m_ts_lo, ts.margin);
      }
      const double I = integral_tan_theta(tr, ts.Ts, T0);
      const double marg = s / p.lambda() - I;
      m_l74 = std::min(m_l74, marg);
      v_l74 += marg < 0;
    }
    const TanRhoResult tro = check_tanrho_bounds(tr);
    m_cone = std::min(m_cone, tro.cone_margin);
    m_env = std::min(m_env, tro.envelope_margin);
    v_cone += !tro.cone_ok;
    v_env += !tro.envelope_ok;
    const ExpansionResult ex = expansion_along_passage(tr);
    m_id = std::max(m_id, ex.identity_error);
    v_id += ex.identity_error > c.identity_tol * std::max(1.0, std::abs(ex.log_expansion));
    q5 = std::max(q5, ex.escaping_term - ex.log_expansion);
    const double ee = std::abs(tr.back().norm_x - p.r0);
    m_exit = std::max(m_exit, ee);
    v_exit += ee > 1e-10;
    for (std::size_t k = 1; k < tr.samples.size(); ++k)
      if (!(tr.samples[k].tan_theta < tr.samples[k - 1].tan_theta)) {
        ++v_mono;
        break;
      }
    // stable-cone dual along the reversed passage
    Vec xb = tr.back().x;
    xb *= p.r0 / xb.norm();
    Vec vb = cone_vector(p.dim, 1.0, rng);
    vb(0) = cap;
    TraceOptions bo;
    bo.sample_dt = c.sample_dt;
    bo.backward = true;
    const CotRhoResult cr = check_cotrho_backward(flow.trace(xb, vb, bo));
    m_back = std::max(m_back, cr.max_cot_rho);
    v_back += !cr.ok;
  }

  std::vector<LawResult> out;
  LawResult l = counted("tan_theta_law", n, v_tan, m_tan);
  l.fitted_constants = Json{{"tolerance", c.tan_tol}, {"sample_spacing_cap", c.fine_dt}};
  out.push_back(l);
  l = counted("radial_ode", n, v_rad, m_rad);
  l.fitted_constants = Json{{"tolerance", c.radial_tol}, {"max_scaled_by_h2", m_rad_scaled}};
  out.push_back(l);
  l = counted("chevron_upper", n, v_up, m_up);
  out.push_back(l);
  l = counted("chevron_lower_fit", n, (beta_fit < floor) + (gamma_fit < floor), 0.0);
  l.fitted_constants = Json{{"beta_prime", beta_fit}, {"gamma_prime", gamma_fit}, {"floor", floor}, {"kappa", c.kappa}};
  out.push_back(l);
  out.push_back(counted("chevron_concavity", n, v_conc, 0.0));
  l = counted("ts_upper", n_ts_hi, v_ts_hi, 0.0);
  l.fitted_constants = Json{{"s", s_hi}, {"min_margin", m_ts_hi}};
  l.pass = l.pass && n_ts_hi > 0;
  out.push_back(l);
  l = counted("ts_lower", n_ts_lo, v_ts_lo, 0.0);
  l.fitted_constants = Json{{"s", s_lo}, {"min_margin", m_ts_lo}};
  l.pass = l.pass && n_ts_lo > 0;
  out.push_back(l);
  l = counted("tan_theta_integral", n_ts_hi + n_ts_lo, v_l74, 0.0);
  l.fitted_constants = Json{{"min_margin", m_l74}};
  out.push_back(l);
  l = counted("unstable_cone_invariance", n, v_cone, 0.0);
  l.fitted_constants = Json{{"min_margin", m_cone}};
  out.push_back(l);
  l = counted("tan_rho_envelope", n, v_env, 0.0);
  l.fitted_constants = Json{{"min_margin", m_env}};
  out.push_back(l);
  l = counted("stable_cone_backward", n, v_back, m_back);
  l.fitted_constants = Json{{"cap", cap}};
  out.push_back(l);
  l = counted("expansion_identity", n, v_id, m_id);
  l.fitted_constants = Json{{"tolerance", c.identity_tol}};
  out.push_back(l);
  l = counted("escaping_lower_bound", n, std::isfinite(q5) ? 0 : 1, 0.0);
  l.fitted_constants = Json{{"Q5", q5}};
  out.push_back(l);
  l = counted("exit_identity", n, v_exit, m_exit);
  out.push_back(l);
  out.push_back(counted("tan_theta_monotone", n, v_mono, 0.0));

  // beta = gamma: cone vectors never contract
  {
    PassageParams q = p;
    q.beta = q.gamma;
    const PassageFlow f2(q, ode);
    const auto [a2, b2] = entry_angles_for(f2, c.T_lo, c.T_hi);
    long viol = 0, m = 0;
    double worst = kInf;
    for (long i = 0; i < std::max<long>(1, c.n_traces / 4); ++i) {
      const Vec x0 = entry_point(q, a2 + (b2 - a2) * U(rng), random_stable_dir(q.dim, rng));
      const Vec v0 = cone_vector(q.dim, cap * U(rng), rng);
      TraceOptions o;
      o.sample_dt = c.sample_dt;
      const ExpansionResult ex = expansion_along_passage(f2.trace(x0, v0, o));
      worst = std::min(worst, ex.min_rate);
      viol += ex.min_rate < -1e-12;
      ++m;
    }
    l = counted("no_contraction_equal_rates", m, viol, 0.0);
    l.fitted_constants = Json{{"min_rate", worst}};
    out.push_back(l);
  }
  // beta >> gamma: transient contraction present, total bounded
  {
    PassageParams q = p;
    q.beta = c.transient_ratio * q.gamma;
    const PassageFlow f2(q, ode);
    const auto [a2, b2] = entry_angles_for(f2, c.T_lo, c.T_hi);
    long m = 0, contracting = 0;
    double q3 = 0;
    for (long i = 0; i < std::max<long>(1, c.n_traces / 4); ++i) {
      const Vec x0 = entry_point(q, a2 + (b2 - a2) * U(rng), random_stable_dir(q.dim, rng));
      const Vec v0 = cone_vector(q.dim, cap * U(rng), rng);
      TraceOptions o;
      o.sample_dt = c.sample_dt;
      const ExpansionResult ex = expansion_along_passage(f2.trace(x0, v0, o));
      contracting += ex.min_rate < 0;
      q3 = std::max(q3, -ex.min_running);
      ++m;
    }
    l = counted("transient_contraction", m, 0, q3);
    l.fitted_constants = Json{{"beta_over_gamma", c.transient_ratio}, {"contracting_traces", contracting}, {"Q3", q3}};
    l.pass = contracting > 0 && std::isfinite(q3);
    out.push_back(l);
  }
  return out;
}

std::vector<LawResult> run_uniformity_laws(const PassageParams& p, const OracleConfig& c,
                                           const OdeOptions& ode) {
  std::mt19937_64 rng(c.seed + 1);
  std::uniform_real_distribution<double> U(0, 1);
  const double cap = 0.5 * p.alpha;
  const std::size_t nb = c.T0_bins.size();
  std::vector<std::vector<double>> q0(nb), q3(nb), dist(nb), eta(nb);
  PassageParams pt = p;
  pt.beta = c.transient_ratio * p.gamma;
  const PassageFlow flow(p, ode), flow_t(pt, ode);
  TraceOptions o;
  o.sample_dt = c.sample_dt;
  for (std::size_t b = 0; b < nb; ++b) {
    const double T = c.T0_bins[b];
    const auto [a, bb] = entry_angles_for(flow, T * (1 - c.bin_halfwidth), T * (1 + c.bin_halfwidth));
    const auto [at, bt] = entry_angles_for(flow_t, T * (1 - c.bin_halfwidth), T * (1 + c.bin_halfwidth));
    for (int k = 0; k < c.batches; ++k) {
      double m0 = 0, m3 = 0, md = 0, me = 0;
      for (int j = 0; j < c.per_batch; ++j) {
        const Vec x0 = entry_point(p, a + (bb - a) * U(rng), random_stable_dir(p.dim, rng));
        const FlowTrace tr = flow.trace(x0, cone_vector(p.dim, cap * U(rng), rng), o);
        m0 = std::max(m0, integral_tan_rho(tr, 0, tr.exit_time));

        const Vec xt = entry_point(pt, at + (bt - at) * U(rng), random_stable_dir(pt.dim, rng));
        const ExpansionResult ex = expansion_along_passage(flow_t.trace(xt, cone_vector(pt.dim, cap * U(rng), rng), o));
        m3 = std::max(m3, -ex.min_running);

        const Vec xa = entry_point(p, a + (bb - a) * U(rng), random_stable_dir(p.dim, rng));
        Vec e1 = Vec::Zero(p.dim);
        e1(0) = -1;  // into Y along the unstable direction
        // second point placed so the image gap is about pair_image_gap
        const double T1 = flow.exit_time(xa) + 1;
        const double stretch = flow.advance_with_tangent(xa, e1, T1).second.norm();
        const double gap = c.pair_image_gap * (0.1 + 0.9 * U(rng));
        Vec ya = xa + (gap / stretch) * e1;
        const PairDistortion pd = pair_distortion_through_Z(flow, xa, ya, e1, e1, c.sample_dt);
        md = std::max(md, pd.constant);
        me = std::max(me, pd.eta_constant);
      }
      q0[b].push_back(m0);
      q3[b].push_back(m3);
      dist[b].push_back(md);
      eta[b].push_back(me);
    }
  }
  std::vector<LawResult> out;
  out.push_back(uniformity_law("tan_rho_integral_uniform", c.T0_bins, q0));
  LawResult l = uniformity_law("passage_contraction_uniform", c.T0_bins, q3);
  l.fitted_constants["beta_over_gamma"] = c.transient_ratio;
  out.push_back(l);
  out.push_back(uniformity_law("pair_distortion_uniform", c.T0_bins, dist));
  l = uniformity_law("tangent_gap_envelope", c.T0_bins, eta);
  l.pass = std::isfinite(l.max_residual);  // finiteness only
  out.push_back(l);
  return out;
}

Json oracle_report(const std::vector<LawResult>& laws) {
  Json arr = Json::array();
  bool all = true;
  for (const auto& l : laws) {
    arr.push_back(l.to_json());
    all = all && l.pass;
  }
  return Json{{"laws", arr}, {"all_pass", all}};
}

}  // namespace ehsrb
