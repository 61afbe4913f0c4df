#include "ehsrb/system.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "ehsrb/errors.hpp"

namespace ehsrb {

namespace {

constexpr int kGeometryGrid = 4096;

Vec core_at(int dim, double th) {
  if (dim == 3) return make_vec({std::cos(th), std::sin(th) - 0.5 * std::sin(2 * th)});
  return make_vec({std::sin(th) - 0.5 * std::sin(2 * th)});
}

Vec core_derivative_at(int dim, double th) {
  if (dim == 3) return make_vec({-std::sin(th), std::cos(th) - std::cos(2 * th)});
  return make_vec({std::cos(th) - std::cos(2 * th)});
}

double blend_at(const SystemSpec& s, double th) {
  const double w = std::abs(wrap_angle(th));
  if (w <= s.r1) return 1.0;
  if (w >= s.r1 + s.blend_width) return 0.0;
  const double t = (w - s.r1) / s.blend_width;
  return 1.0 - t * t * t * (10 + t * (-15 + 6 * t));
}

double blend_slope_at(const SystemSpec& s, double th) {
  const double ww = wrap_angle(th);
  const double w = std::abs(ww);
  if (w <= s.r1 || w >= s.r1 + s.blend_width) return 0.0;
  const double t = (w - s.r1) / s.blend_width;
  const double ds = 30 * t * t * (1 - t) * (1 - t) / s.blend_width;
  return ww > 0 ? -ds : ds;
}

Vec offset_at(const SystemSpec& s, int dim, double th) {
  const double b = blend_at(s, th);
  return s.offset * ((1 - b) * core_at(dim, th) + b * core_at(dim, 0.0));
}

void validate_geometry(const SystemSpec& s, int dim) {
  const int m = s.base_expansion;
  const double c = s.contraction;
  double max_offset = 0;
  double min_sep = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGeometryGrid; ++i) {
    const double th = kTwoPi * i / kGeometryGrid;
    const Vec o = offset_at(s, dim, th);
    max_offset = std::max(max_offset, o.norm());
    if (dim == 3) {
      for (int j = 1; j < m; ++j)
        min_sep = std::min(min_sep, (o - offset_at(s, dim, th + kTwoPi * j / m)).norm());
    }
  }
  if (!(c + max_offset < 1.0))
    throw ConfigError("trapping violated: contraction + max|offset curve| must be < 1");
  if (dim == 3 && !(min_sep > 2 * c))
    throw ConfigError(
        "injectivity violated: images of fibres over preimage angles overlap "
        "(need min separation of offset curve > 2 * contraction)");
  const Vec ystar = offset_at(s, dim, 0.0) / (1 - c);
  if (!(ystar.norm() + s.r1 < 1.0))
    throw ConfigError("neutral region does not fit inside the trapping region (|y*| + r1 >= 1)");
}

}  // namespace

void SystemSpec::validate() const {
  passage(3).validate();
  if (!(blend_width > 0)) throw ConfigError("blend_width must be positive");
  if (!(r1 + blend_width < kPi))
    throw ConfigError("blend annulus must stay inside the base circle (r1 + blend_width < pi)");
  if (base_expansion < 2) throw ConfigError("base_expansion must be an integer >= 2");
  if (!(contraction > 0 && contraction < 0.5))
    throw ConfigError("contraction must lie in (0, 1/2)");
  if (!(offset > 0)) throw ConfigError("offset must be positive");
  if (!(2 * contraction + offset < 1))
    throw ConfigError("injectivity invariant violated: 2 * contraction + offset must be < 1");
  if (std::abs(gamma - std::log(static_cast<double>(base_expansion))) > 1e-9)
    throw ConfigError("gamma must equal log(base_expansion) so that f is the linear time-1 map at p");
  if (std::abs(beta + std::log(contraction)) > 1e-9)
    throw ConfigError("beta must equal -log(contraction) so that f is the linear time-1 map at p");
}

PassageParams SystemSpec::passage(int dim) const {
  PassageParams p;
  p.gamma = gamma;
  p.beta = beta;
  p.alpha = alpha;
  p.r0 = r0;
  p.r1 = r1;
  p.dim = dim;
  return p;
}

std::string to_string(ModelKind k) { return k == ModelKind::kSolenoid ? "solenoid" : "local"; }
std::string to_string(MapVariant v) { return v == MapVariant::kBase ? "base" : "slowed"; }
std::string to_string(Region r) {
  switch (r) {
    case Region::kInsideY: return "inside_Y";
    case Region::kInsideZ: return "inside_Z";
    case Region::kBlend: return "blend";
    case Region::kOutside: return "outside";
  }
  return "?";
}

namespace {
PassageParams checked_params(const SystemSpec& s, ModelKind kind) {
  s.validate();
  const int dim = kind == ModelKind::kSolenoid ? 3 : 2;
  validate_geometry(s, dim);
  return s.passage(dim);
}
}  // namespace

System::System(SystemSpec spec, ModelKind kind, MapVariant variant, OdeOptions ode)
    : spec_(spec),
      kind_(kind),
      variant_(variant),
      dim_(kind == ModelKind::kSolenoid ? 3 : 2),
      flow_(checked_params(spec, kind), ode) {
  ystar_ = offset_at(spec_, dim_, 0.0) / (1 - spec_.contraction);
}

System build_system(const SystemSpec& spec, ModelKind kind, MapVariant variant) {
  return System(spec, kind, variant);
}

Vec System::core(double th) const { return core_at(dim_, th); }
Vec System::core_derivative(double th) const { return core_derivative_at(dim_, th); }
double System::blend(double th) const { return blend_at(spec_, th); }
Vec System::offset_curve(double th) const { return offset_at(spec_, dim_, th); }
double System::offset_value_component(double th, int i) const { return offset_curve(th)(i); }

Vec System::offset_derivative(double th) const {
  const double b = blend(th);
  const double db = blend_slope_at(spec_, th);
  return spec_.offset * ((1 - b) * core_derivative(th) - db * (core(th) - core(0.0)));
}

bool System::in_trapping_region(const Vec& z) const {
  if (z.size() != dim_) return false;
  if (!std::isfinite(z(0))) return false;
  return z.tail(dim_ - 1).norm() <= 1.0 + 1e-12;
}

bool System::in_tube(const Vec& z) const { return std::abs(wrap_angle(z(0))) < spec_.r1; }
bool System::in_z(const Vec& z) const { return to_local(z).norm() < spec_.r1; }

Vec System::to_local(const Vec& z) const {
  Vec x(dim_);
  x(0) = wrap_angle(z(0));
  x.tail(dim_ - 1) = z.tail(dim_ - 1) - ystar_;
  return x;
}

Vec System::from_local(const Vec& x) const {
  Vec z(dim_);
  z(0) = unit_angle(x(0));
  z.tail(dim_ - 1) = x.tail(dim_ - 1) + ystar_;
  return z;
}

Vec System::fixed_point() const {
  Vec p(dim_);
  p(0) = 0.0;
  p.tail(dim_ - 1) = ystar_;
  return p;
}

Vec System::canonical(const Vec& z) const {
  Vec c = z;
  c(0) = unit_angle(z(0));
  return c;
}

Vec System::displacement(const Vec& a, const Vec& b) const {
  Vec d = b - a;
  d(0) = wrap_angle(d(0));
  return d;
}

Vec System::unstable_reference() const {
  Vec e = Vec::Zero(dim_);
  e(0) = 1.0;
  return e;
}

Mat System::stable_reference() const {
  Mat F = Mat::Zero(dim_, dim_ - 1);
  for (int i = 1; i < dim_; ++i) F(i, i - 1) = 1.0;
  return F;
}

Region System::region(const Vec& z) const {
  const Vec x = to_local(z);
  const double n = x.norm();
  if (n < spec_.r0) return Region::kInsideY;
  if (n < spec_.r1) return Region::kInsideZ;
  const double w = std::abs(x(0));
  if (w >= spec_.r1 && w < spec_.r1 + spec_.blend_width) return Region::kBlend;
  return Region::kOutside;
}

Vec System::base_map(const Vec& z) const {
  Vec out(dim_);
  out(0) = unit_angle(spec_.base_expansion * z(0));
  out.tail(dim_ - 1) = spec_.contraction * z.tail(dim_ - 1) + offset_curve(z(0));
  return out;
}

Mat System::base_jacobian(const Vec& z) const {
  Mat D = Mat::Zero(dim_, dim_);
  D(0, 0) = spec_.base_expansion;
  D.block(1, 0, dim_ - 1, 1) = offset_derivative(z(0));
  for (int i = 1; i < dim_; ++i) D(i, i) = spec_.contraction;
  return D;
}

namespace {
// Whether the slowed map must integrate the flow at z (otherwise g = f there).
bool needs_flow(const System& s, const Vec& z) {
  if (!s.slowed() || !s.in_tube(z)) return false;
  const Vec x = s.to_local(z);
  return s.flow().linear_min_norm(x, 1.0) < s.spec().r1;
}
}  // namespace

Vec System::step(const Vec& z) const {
  if (!in_trapping_region(z)) throw DomainError("step: state outside the trapping region");
  if (needs_flow(*this, z)) return from_local(flow_.advance(to_local(z), 1.0));
  return base_map(z);
}

Mat System::jacobian(const Vec& z) const { return step_with_jacobian(z).second; }

std::pair<Vec, Mat> System::step_with_jacobian(const Vec& z) const {
  if (!in_trapping_region(z)) throw DomainError("jacobian: state outside the trapping region");
  if (needs_flow(*this, z)) {
    auto [x1, M] = flow_.advance_with_jacobian(to_local(z), 1.0);
    return {from_local(x1), M};
  }
  return {base_map(z), base_jacobian(z)};
}

std::pair<Vec, Vec> System::step_with_tangent(const Vec& z, const Vec& v) const {
  if (!in_trapping_region(z)) throw DomainError("step: state outside the trapping region");
  if (needs_flow(*this, z)) {
    auto [x1, v1] = flow_.advance_with_tangent(to_local(z), v, 1.0);
    return {from_local(x1), v1};
  }
  return {base_map(z), base_jacobian(z) * v};
}

System::TangentIterate System::iterate_with_tangent(const Vec& z, const Vec& v, long k) const {
  TangentIterate r{z, v / v.norm(), 0.0};
  while (k > 0) {
    long m = 1;
    // in the tube g^j is the time-j flow until the orbit has left Z
    if (slowed() && k >= 2 && in_tube(r.z)) m = std::min(first_exit(r.z, k), k);
    std::pair<Vec, Vec> out;
    if (m >= 2) {
      const auto [x1, v1] = flow_.advance_with_tangent(to_local(r.z), r.tangent, static_cast<double>(m));
      out = {from_local(x1), v1};
    } else {
      out = step_with_tangent(r.z, r.tangent);
    }
    const double nv = out.second.norm();
    if (!(nv > 0) || !std::isfinite(nv)) throw NumericError("iterate_with_tangent: degenerate tangent");
    r.log_stretch += std::log(nv);
    r.tangent = out.second / nv;
    r.z = canonical(out.first);
    if (!in_trapping_region(r.z)) throw DomainError("iterate_with_tangent: left the trapping region");
    k -= m;
  }
  return r;
}

Vec System::inverse_step(const Vec& z) const {
  if (!in_trapping_region(z)) throw DomainError("inverse_step: state outside the trapping region");
  std::vector<Vec> cands;
  if (slowed()) {
    const Vec x = to_local(z);
    if (std::abs(x(0)) < std::exp(spec_.gamma) * spec_.r1 * 1.01) {
      const Vec w = flow_.advance(x, -1.0);
      const Vec zw = from_local(w);
      if (std::abs(w(0)) < spec_.r1 && in_trapping_region(zw)) cands.push_back(zw);
    }
  }
  const int m = spec_.base_expansion;
  for (int j = 0; j < m; ++j) {
    const double th = unit_angle((unit_angle(z(0)) + kTwoPi * j) / m);
    if (slowed() && std::abs(wrap_angle(th)) < spec_.r1) continue;
    Vec w(dim_);
    w(0) = th;
    w.tail(dim_ - 1) = (z.tail(dim_ - 1) - offset_curve(th)) / spec_.contraction;
    if (in_trapping_region(w)) cands.push_back(w);
  }
  if (cands.empty()) throw GeometryError("inverse_step: no preimage inside the trapping region");
  if (cands.size() > 1) throw GeometryError("inverse_step: preimage is not unique");
  return cands.front();
}

FlowTrace System::flow_through_Z(const Vec& x0_local, const Vec& v0,
                                 const TraceOptions& opt) const {
  if (x0_local.norm() > spec_.r0 * (1 + 1e-12))
    throw DomainError("flow_through_Z: start point must lie inside Y");
  return flow_.trace(x0_local, v0, opt);
}

std::optional<System::BackwardEntry> System::backward_entry(const Vec& z, int max_k) const {
  if (!slowed() || !in_z(z)) return std::nullopt;
  const Vec x = to_local(z);
  if (x.tail(dim_ - 1).norm() == 0.0) return std::nullopt;  // local unstable manifold
  double tout;
  try {
    tout = flow_.ball_window(x, spec_.r1, static_cast<double>(max_k) + 2.0, true).second;
  } catch (const HorizonError&) {
    return std::nullopt;
  }
  const double k = std::max(1.0, std::ceil(tout));
  if (k > max_k) return std::nullopt;
  auto [w, M] = flow_.advance_with_jacobian(x, -k);
  const Vec zw = from_local(w);
  if (!in_trapping_region(zw)) return std::nullopt;
  BackwardEntry be;
  be.k = static_cast<int>(k);
  be.entry = zw;
  be.forward_jacobian = M.inverse();
  return be;
}

long System::first_exit(const Vec& z, long n_max) const {
  if (!in_trapping_region(z)) throw DomainError("first_exit: state outside the trapping region");
  if (!slowed()) {
    Vec cur = z;
    for (long n = 1; n <= n_max; ++n) {
      cur = base_map(cur);
      if (!in_z(cur)) return n;
    }
    return n_max + 1;
  }
  long n = 0;
  Vec cur = z;
  if (!in_tube(cur)) {
    cur = base_map(cur);
    n = 1;
    if (!in_z(cur)) return 1;
  }
  // In the tube every further iterate is the time-1 flow until the orbit leaves Z.
  const Vec x = to_local(cur);
  double tin, tout;
  try {
    std::tie(tin, tout) = flow_.ball_window(x, spec_.r1, static_cast<double>(n_max) + 2.0);
  } catch (const HorizonError&) {
    return n_max + 1;
  }
  // Smallest integer m >= 1 outside the open sojourn interval (tin, tout).
  long m;
  if (tout <= tin || 1.0 <= tin || 1.0 >= tout)
    m = 1;
  else
    m = static_cast<long>(std::ceil(tout));
  const long total = n + m;
  return total > n_max ? n_max + 1 : total;
}

}  // namespace ehsrb
