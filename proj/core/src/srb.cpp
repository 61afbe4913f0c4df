#include "ehsrb/srb.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "ehsrb/errors.hpp"

namespace ehsrb {

namespace {
Json finite_or_string(double x) { return std::isfinite(x) ? Json(x) : Json(format_double(x)); }
}  // namespace

long long GridSpec::box_index(const Vec& z) const {
  long long idx = 0, stride = 1;
  for (int a = 0; a < dim; ++a) {
    const double lo = a == 0 ? 0.0 : -1.0;
    const double hi = a == 0 ? kTwoPi : 1.0;
    long long b = static_cast<long long>(std::floor((z(a) - lo) / (hi - lo) * bins));
    b = std::clamp<long long>(b, 0, bins - 1);
    idx += b * stride;
    stride *= bins;
  }
  return idx;
}

long long GridSpec::n_boxes() const {
  long long n = 1;
  for (int a = 0; a < dim; ++a) n *= bins;
  return n;
}

Json GridSpec::to_json() const {
  Json lo = Json::array(), hi = Json::array();
  for (int a = 0; a < dim; ++a) {
    lo.push_back(a == 0 ? 0.0 : -1.0);
    hi.push_back(a == 0 ? kTwoPi : 1.0);
  }
  return Json{{"dim", dim}, {"bins_per_axis", bins}, {"lower", lo}, {"upper", hi},
              {"index", "sum_a bin_a * bins^a, axis 0 = theta"}};
}

void EmpiricalMeasure::add(const Vec& z, double w, long leaf_id, double arc_coord) {
  if (!(w >= 0)) throw PreconditionError("negative sample weight");
  points.push_back(z);
  weights.push_back(w);
  leaf.push_back(leaf_id);
  arc.push_back(arc_coord);
  boxes[grid.box_index(z)] += w;
  total_mass += w;
}

void EmpiricalMeasure::rebuild_boxes() {
  boxes.clear();
  total_mass = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    boxes[grid.box_index(points[i])] += weights[i];
    total_mass += weights[i];
  }
}

double EmpiricalMeasure::box_mass() const {
  double s = 0;
  for (const auto& [k, m] : boxes) s += m;
  return s;
}

std::vector<double> EmpiricalMeasure::marginal(int axis, int bins) const {
  if (axis < 0 || axis >= grid.dim || bins < 1) throw PreconditionError("marginal: bad axis or bins");
  std::vector<double> out(bins, 0.0);
  const double lo = axis == 0 ? 0.0 : -1.0, hi = axis == 0 ? kTwoPi : 1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    long b = static_cast<long>(std::floor((points[i](axis) - lo) / (hi - lo) * bins));
    out[std::clamp<long>(b, 0, bins - 1)] += weights[i];
  }
  return out;
}

std::vector<std::pair<double, double>> EmpiricalMeasure::angles() const {
  std::vector<std::pair<double, double>> a;
  a.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) a.push_back({points[i](0), weights[i]});
  return a;
}

double EmpiricalMeasure::angular_ks() const { return ks_uniform(angles(), 0.0, kTwoPi); }

EmpiricalMeasure EmpiricalMeasure::normalized() const {
  if (!(total_mass > 0)) throw PreconditionError("cannot normalise a zero measure");
  EmpiricalMeasure m = *this;
  for (double& w : m.weights) w /= total_mass;
  m.rebuild_boxes();
  return m;
}

void EmpiricalMeasure::write_box_csv(std::ostream& os) const {
  CsvWriter w(os);
  w.row({"box", "mass"});
  for (const auto& [k, m] : boxes) {
    w.field(k).field(m);
    w.end_row();
  }
}

Json EmpiricalMeasure::sidecar(const Json& provenance) const {
  return Json{{"grid", grid.to_json()},
              {"total_mass", total_mass},
              {"samples", points.size()},
              {"occupied_boxes", boxes.size()},
              {"provenance", provenance}};
}

void EmpiricalMeasure::write_marginals_csv(std::ostream& os, int bins) const {
  CsvWriter w(os);
  w.row({"axis", "bin", "lower", "upper", "mass"});
  for (int a = 0; a < grid.dim; ++a) {
    const auto m = marginal(a, bins);
    const double lo = a == 0 ? 0.0 : -1.0, hi = a == 0 ? kTwoPi : 1.0;
    for (int b = 0; b < bins; ++b) {
      w.field(a).field(b).field(lo + (hi - lo) * b / bins).field(lo + (hi - lo) * (b + 1) / bins).field(m[b]);
      w.end_row();
    }
  }
}

TestFamily::TestFamily(int dim) : dim_(dim) {
  const double g = 0.6180339887498949, s2 = 0.41421356237309515, s3 = 0.7320508075688772;
  for (int j = 0; j < 16; ++j) {
    Vec c(dim);
    c(0) = kTwoPi * std::fmod(j * g, 1.0);
    for (int a = 1; a < dim; ++a) c(a) = 0.8 * (2 * std::fmod((j + 1) * (a == 1 ? s2 : s3), 1.0) - 1);
    centers_.push_back(c);
  }
}

double TestFamily::eval(int j, const Vec& z) const {
  const double th = z(0);
  if (j < 48) {
    const int r = j % 16;
    const int k = r / 2 + 1;
    const double t = (r % 2 == 0) ? std::cos(k * th) : std::sin(k * th);
    if (j < 16) return t;
    if (j < 32) return t * std::clamp(z(1), -1.0, 1.0);
    const double yl = std::clamp(z(dim_ - 1), -1.0, 1.0);
    return t * (2 * yl * yl - 1);
  }
  const Vec& c = centers_[j - 48];
  double r2 = std::pow(wrap_angle(th - c(0)), 2);
  for (int a = 1; a < dim_; ++a) r2 += std::pow(z(a) - c(a), 2);
  return std::exp(-r2 / (2 * 0.25 * 0.25));
}

std::vector<double> TestFamily::values(const Vec& z) const {
  std::vector<double> v(kSize);
  for (int j = 0; j < kSize; ++j) v[j] = eval(j, z);
  return v;
}

std::vector<double> TestFamily::moments(const EmpiricalMeasure& m) const {
  std::vector<double> out(kSize, 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (int j = 0; j < kSize; ++j) out[j] += m.weights[i] * eval(j, m.points[i]);
  return out;
}

double TestFamily::distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw PreconditionError("moment vectors differ in size");
  double d = 0;
  for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, std::abs(a[j] - b[j]));
  return d;
}

std::vector<double> seed_weights(const CurveChain& c) {
  const std::size_t n = c.samples.size();
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double h = 0.5 * (c.samples[i + 1].sigma - c.samples[i].sigma);
    w[i] += h;
    w[i + 1] += h;
  }
  return w;
}

namespace {
// Arc-length weights of the current image of the chain.
std::vector<double> leaf_weights(const System& sys, const CurveChain& c, std::vector<double>* arc) {
  if (c.steps == 0) {
    if (arc) {
      arc->clear();
      for (const auto& s : c.samples) arc->push_back(s.sigma - c.samples.front().sigma);
    }
    return seed_weights(c);
  }
  const std::size_t n = c.samples.size();
  std::vector<double> w(n, 0.0), a(n, 0.0);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double d = sys.distance(c.samples[i].z, c.samples[i + 1].z);
    a[i + 1] = a[i] + d;
    w[i] += 0.5 * d;
    w[i + 1] += 0.5 * d;
  }
  if (arc) *arc = a;
  return w;
}

std::vector<double> chord_arc(const System& sys, const CurveChain& c) {
  std::vector<double> a(c.samples.size(), 0.0);
  for (std::size_t i = 1; i < c.samples.size(); ++i)
    a[i] = a[i - 1] + sys.distance(c.samples[i - 1].z, c.samples[i].z);
  return a;
}
}  // namespace

EmpiricalMeasure pushforward_leaf_volume(const System& sys, const CurveChain& curve, long n,
                                         const GridSpec& grid, const PushforwardOptions& opt) {
  if (n < 0) throw PreconditionError("pushforward: n must be >= 0");
  if (std::isfinite(opt.h_max) && curve.steps != 0)
    throw PreconditionError("refined pushforward needs a chain at step 0");
  CurveChain c = curve;
  std::vector<double> arc0;
  std::vector<double> w = leaf_weights(sys, c, &arc0);
  EvolveOptions eo;
  eo.h_max = opt.h_max;
  evolve_curve(sys, c, n, eo);
  if (std::isfinite(opt.h_max)) w = seed_weights(c);
  const std::vector<double> arc = n == 0 ? arc0 : chord_arc(sys, c);
  EmpiricalMeasure m;
  m.grid = grid;
  m.points.reserve(c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i)
    m.add(c.samples[i].z, w[i], opt.track_leaves ? 0 : -1, opt.track_leaves ? arc[i] : 0.0);
  return m;
}

CesaroResult cesaro_measure(const System& sys, const CurveChain& curve, long n, const GridSpec& grid,
                            bool keep_samples) {
  if (n < 1) throw PreconditionError("cesaro_measure: n must be >= 1");
  const std::vector<double> w = leaf_weights(sys, curve, nullptr);
  const TestFamily fam(sys.dim());
  CesaroResult r;
  r.measure.grid = grid;
  r.moments.assign(TestFamily::kSize, 0.0);
  r.image_moments.assign(TestFamily::kSize, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  double mass = 0;
  if (keep_samples) r.measure.points.reserve(curve.samples.size() * static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < curve.samples.size(); ++i) {
    const double wi = w[i] * inv_n;
    mass += w[i];
    Vec z = curve.samples[i].z;
    std::vector<double> phi = fam.values(z);
    for (long k = 0; k < n; ++k) {
      if (keep_samples) {
        r.measure.add(z, wi);
      } else {
        r.measure.boxes[grid.box_index(z)] += wi;
        r.measure.total_mass += wi;
      }
      for (int j = 0; j < TestFamily::kSize; ++j) r.moments[j] += wi * phi[j];
      z = sys.canonical(sys.step(z));
      phi = fam.values(z);
      for (int j = 0; j < TestFamily::kSize; ++j) r.image_moments[j] += wi * phi[j];
    }
  }
  r.invariance_defect = TestFamily::distance(r.moments, r.image_moments);
  r.defect_bound = 2.0 * mass * inv_n;
  return r;
}

std::vector<std::vector<double>> cesaro_moment_path(const System& sys, const CurveChain& curve,
                                                    const std::vector<long>& checkpoints) {
  if (checkpoints.empty()) return {};
  if (!std::is_sorted(checkpoints.begin(), checkpoints.end()) || checkpoints.front() < 1)
    throw PreconditionError("checkpoints must be ascending and >= 1");
  const std::vector<double> w = leaf_weights(sys, curve, nullptr);
  const TestFamily fam(sys.dim());
  const long n = checkpoints.back();
  std::vector<std::vector<double>> sums(checkpoints.size(), std::vector<double>(TestFamily::kSize, 0.0));
  for (std::size_t i = 0; i < curve.samples.size(); ++i) {
    Vec z = curve.samples[i].z;
    std::vector<double> acc(TestFamily::kSize, 0.0);
    std::size_t c = 0;
    for (long k = 0; k < n; ++k) {
      for (int j = 0; j < TestFamily::kSize; ++j) acc[j] += w[i] * fam.eval(j, z);
      if (k + 1 == checkpoints[c]) {
        for (int j = 0; j < TestFamily::kSize; ++j) sums[c][j] += acc[j];
        while (c + 1 < checkpoints.size() && checkpoints[c + 1] == checkpoints[c]) {
          ++c;
          sums[c] = sums[c - 1];
        }
        ++c;
      }
      z = sys.canonical(sys.step(z));
    }
  }
  for (std::size_t c = 0; c < checkpoints.size(); ++c)
    for (double& v : sums[c]) v /= static_cast<double>(checkpoints[c]);
  return sums;
}

Json LyapunovEstimate::to_json() const { return Json{{"exponents", exponents}, {"se", se}, {"n", n}}; }

LyapunovEstimate lyapunov_exponents(const System& sys, const Vec& x0, long n, long burn_in,
                                    std::size_t batches) {
  if (n < 1) throw PreconditionError("lyapunov_exponents: n must be >= 1");
  const int d = sys.dim();
  Vec z = x0;
  for (long k = 0; k < burn_in; ++k) z = sys.canonical(sys.step(z));
  Mat Q = Mat::Identity(d, d);
  std::vector<std::vector<double>> series(d);
  for (auto& s : series) s.reserve(static_cast<std::size_t>(n));
  for (long k = 0; k < n; ++k) {
    auto [z1, D] = sys.step_with_jacobian(z);
    const Mat M = D * Q;
    Eigen::HouseholderQR<Mat> qr(M);
    const Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
    Q = qr.householderQ();
    for (int i = 0; i < d; ++i) {
      if (R(i, i) < 0) Q.col(i) = -Q.col(i);
      series[i].push_back(std::log(std::abs(R(i, i))));
    }
    z = sys.canonical(z1);
  }
  LyapunovEstimate e;
  e.n = n;
  for (int i = 0; i < d; ++i) {
    const MeanSe m = batch_means(series[i], batches);
    e.exponents.push_back(m.mean);
    e.se.push_back(m.se);
  }
  return e;
}

MeanSe birkhoff_average(const System& sys, const TestFamily& fam, int j, const Vec& x0, long n) {
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(n));
  Vec z = x0;
  for (long k = 0; k < n; ++k) {
    s.push_back(fam.eval(j, z));
    z = sys.canonical(sys.step(z));
  }
  return batch_means(s);
}

Json LeafReport::to_json() const {
  Json ls = Json::array();
  for (const auto& l : leaves)
    ls.push_back(Json{{"leaf", l.leaf},
                      {"samples", l.samples},
                      {"density_min", l.density_min},
                      {"density_max", l.density_max},
                      {"ratio", finite_or_string(l.ratio)},
                      {"concentrated", l.concentrated}});
  return Json{{"leaves", ls},
              {"skipped", skipped},
              {"max_ratio", finite_or_string(max_ratio)},
              {"any_concentrated", any_concentrated},
              {"conditioning", "per-piece surrogate"}};
}

LeafReport leaf_absolute_continuity(const EmpiricalMeasure& m, double ratio_cap,
                                    std::size_t min_samples, int smooth) {
  std::map<long, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m.leaf[i] >= 0) groups[m.leaf[i]].push_back(i);
  LeafReport rep;
  for (auto& [id, idx] : groups) {
    if (idx.size() < std::max<std::size_t>(min_samples, 2)) {
      ++rep.skipped;
      continue;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return m.arc[a] < m.arc[b]; });
    const std::size_t n = idx.size();
    std::vector<double> q(n, 0.0), w(n);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double h = 0.5 * (m.arc[idx[i + 1]] - m.arc[idx[i]]);
      q[i] += h;
      q[i + 1] += h;
    }
    double W = 0, Q = 0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = m.weights[idx[i]];
      W += w[i];
      Q += q[i];
    }
    if (!(Q > 0) || !(W > 0)) {
      ++rep.skipped;
      continue;
    }
    LeafDiagnostic d;
    d.leaf = id;
    d.samples = n;
    d.density_min = std::numeric_limits<double>::infinity();
    d.density_max = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = i >= static_cast<std::size_t>(smooth) ? i - smooth : 0;
      const std::size_t b = std::min(n - 1, i + smooth);
      double sw = 0, sq = 0;
      for (std::size_t k = a; k <= b; ++k) {
        sw += w[k];
        sq += q[k];
      }
      const double dens = (sw / sq) / (W / Q);
      d.density_min = std::min(d.density_min, dens);
      d.density_max = std::max(d.density_max, dens);
    }
    d.ratio = d.density_min > 0 ? d.density_max / d.density_min : std::numeric_limits<double>::infinity();
    d.concentrated = !(d.ratio <= ratio_cap);
    rep.max_ratio = std::max(rep.max_ratio, d.ratio);
    rep.any_concentrated = rep.any_concentrated || d.concentrated;
    rep.leaves.push_back(d);
  }
  return rep;
}

}  // namespace ehsrb
