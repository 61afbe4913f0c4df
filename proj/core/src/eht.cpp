#include "ehsrb/eht.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ehsrb/errors.hpp"

namespace ehsrb {

GlobalBounds estimate_global_bounds(const System& sys, long n_samples, unsigned long long seed) {
  const int d = sys.dim();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double max_norm = 1.0, max_cond = 1.0;
  for (long i = 0; i < n_samples; ++i) {
    Vec z(d);
    do {
      z(0) = kPi * (U(rng) + 1.0);
      for (int j = 1; j < d; ++j) z(j) = U(rng);
    } while (!sys.in_trapping_region(z));
    // bias half the samples into Z, where the map varies most
    if (i % 2 == 1 && sys.slowed()) {
      Vec x(d);
      do {
        for (int j = 0; j < d; ++j) x(j) = sys.spec().r1 * U(rng);
      } while (x.norm() >= sys.spec().r1);
      z = sys.from_local(x);
    }
    const Mat D = sys.jacobian(z);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(D);
    const auto& s = svd.singularValues();
    max_norm = std::max({max_norm, s(0), 1.0 / s(d - 1)});
    max_cond = std::max(max_cond, s(0) / s(d - 1));
  }
  GlobalBounds b;
  b.L = std::log(max_norm);
  // the angle between image lines changes by at most the condition number
  b.L1 = std::log(max_cond);
  const double a = sys.spec().alpha;
  b.L2 = std::max(b.L1 / a, b.L * (1 + 2 / a));
  return b;
}

namespace {
Mat normalized(const Mat& M) { return regularize_transform(M); }
}  // namespace

OrbitLog orbit_log(const ConeField& field, const Vec& x0, long n, const OrbitLogOptions& opt) {
  const System& sys = field.system();
  if (n < 1) throw PreconditionError("orbit_log: n must be >= 1");
  if (!sys.in_trapping_region(x0)) throw DomainError("orbit_log: start outside the trapping region");
  OrbitLog log;
  log.x0 = x0;
  log.theta_bar = opt.theta_bar;
  log.L2 = opt.L2;
  log.positions.reserve(n + 1);
  log.jacobians.reserve(n);
  log.positions.push_back(sys.canonical(x0));
  for (long k = 0; k < n; ++k) {
    auto [z1, D] = sys.step_with_jacobian(log.positions.back());
    if (!sys.in_trapping_region(z1)) throw IntegrityError("orbit left the trapping region");
    log.jacobians.push_back(D);
    log.positions.push_back(sys.canonical(z1));
  }
  log.in_z.resize(n + 1);
  for (long k = 0; k <= n; ++k) log.in_z[k] = sys.slowed() && sys.in_z(log.positions[k]);

  // Cones: reference outside Z, propagated along each run inside Z.
  const ConePair ref = field.reference();
  log.cones.assign(n + 1, ref);
  long k = 0;
  while (k <= n) {
    if (!log.in_z[k]) {
      ++k;
      continue;
    }
    long a = k, b = k;
    while (b <= n && log.in_z[b]) ++b;  // run [a, b)
    // unstable: pushed forward from z_{a-1}
    if (a == 0) {
      log.cones[a].unstable = field.at(log.positions[a]).unstable;
    } else {
      log.cones[a].unstable.transform =
          normalized(log.cones[a - 1].unstable.transform * log.jacobians[a - 1].inverse());
    }
    for (long j = a + 1; j < b; ++j)
      log.cones[j].unstable.transform =
          normalized(log.cones[j - 1].unstable.transform * log.jacobians[j - 1].inverse());
    // stable: pulled back from z_b
    long last = b - 1;
    if (b > n) {
      log.cones[n].stable = field.at(log.positions[n]).stable;
      last = n - 1;
    } else {
      log.cones[last].stable.transform =
          normalized(log.cones[b].stable.transform * log.jacobians[last]);
      --last;
    }
    for (long j = last; j >= a; --j)
      log.cones[j].stable.transform = normalized(log.cones[j + 1].stable.transform * log.jacobians[j]);
    k = b;
  }

  const double alpha = sys.spec().alpha;
  log.lambda_u.resize(n);
  log.lambda_s.resize(n);
  log.defect.resize(n);
  log.lambda.resize(n);
  log.theta.resize(n);
  log.lambda_e.resize(n);
  for (long j = 0; j < n; ++j) {
    const RateSample r = rates_from_jacobian(log.jacobians[j], log.cones[j], alpha, opt.lattice);
    log.lambda_u[j] = r.lambda_u;
    log.lambda_s[j] = r.lambda_s;
    log.defect[j] = r.defect;
    log.lambda[j] = r.lambda;
    log.theta[j] = r.theta;
    log.lambda_e[j] = r.theta >= opt.theta_bar ? r.lambda_u - r.defect : -opt.L2;
  }
  return log;
}

void OrbitLog::write_csv(std::ostream& os) const {
  CsvWriter w(os);
  const int d = static_cast<int>(x0.size());
  w.field("k");
  for (int i = 1; i <= d; ++i) w.field("x" + std::to_string(i));
  w.field("lambda_u").field("lambda_s").field("defect").field("lambda").field("theta");
  w.field("lambda_e").field("in_z");
  w.end_row();
  for (std::size_t k = 0; k < size(); ++k) {
    w.field(k);
    for (int i = 0; i < d; ++i) w.field(positions[k](i));
    w.field(lambda_u[k]).field(lambda_s[k]).field(defect[k]).field(lambda[k]).field(theta[k]);
    w.field(lambda_e[k]).field(static_cast<int>(in_z[k]));
    w.end_row();
  }
}

void fill_density(EhtResult& r, long n) {
  r.length = n;
  if (n <= 0) {
    r.window = 0;
    r.density_lower = r.density_upper = 0.0;
    return;
  }
  long W = std::max(1L, (n / 2) / 10);
  const long n_windows = std::max(1L, std::min(10L, n / W));
  std::vector<long> counts(n_windows, 0);
  const long start = n - n_windows * W;  // windows cover (start, n]
  for (long i : r.indices) {
    if (i <= start) continue;
    const long w = (i - start - 1) / W;
    if (w >= 0 && w < n_windows) ++counts[w];
  }
  r.window = W;
  r.density_lower = 1.0;
  r.density_upper = 0.0;
  for (long c : counts) {
    const double f = static_cast<double>(c) / static_cast<double>(W);
    r.density_lower = std::min(r.density_lower, f);
    r.density_upper = std::max(r.density_upper, f);
  }
}

EhtResult pliss_times(const std::vector<double>& a, double lambda_bar) {
  EhtResult r;
  // m = min_k sum_{j=k}^{n-1} (a_j - lambda_bar), updated in one pass.
  double m = 0.0;
  for (std::size_t n = 1; n <= a.size(); ++n) {
    const double b = a[n - 1] - lambda_bar;
    m = n == 1 ? b : b + std::min(0.0, m);
    if (m >= 0) r.indices.push_back(static_cast<long>(n));
  }
  fill_density(r, static_cast<long>(a.size()));
  return r;
}

EhtResult pliss_times_bruteforce(const std::vector<double>& a, double lambda_bar) {
  EhtResult r;
  const std::size_t N = a.size();
  for (std::size_t n = 1; n <= N; ++n) {
    bool ok = true;
    for (std::size_t k = 0; k < n && ok; ++k) {
      double s = 0;
      for (std::size_t j = k; j < n; ++j) s += a[j];
      ok = s >= lambda_bar * static_cast<double>(n - k);
    }
    if (ok) r.indices.push_back(static_cast<long>(n));
  }
  fill_density(r, static_cast<long>(N));
  return r;
}

std::vector<int> stable_control_depth(const OrbitLog& log, double C, double lambda_bar, int q_max) {
  if (q_max < 0) throw DomainError("stable control depth: q must be >= 0");
  const long N = static_cast<long>(log.jacobians.size());
  std::vector<Mat> inv(N);
  for (long j = 0; j < N; ++j) inv[j] = log.jacobians[j].inverse();
  const double logC = std::log(C);
  std::vector<int> depth(N + 1, -1);
  const int d = static_cast<int>(log.x0.size());
  for (long n = 0; n <= N; ++n) {
    const Cone& ks = log.cones[n].stable;
    Mat M = Mat::Identity(d, d);
    int k = 0;
    if (logC > 1e-15) {
      depth[n] = -1;
      continue;
    }
    depth[n] = 0;
    for (k = 1; k <= q_max && k <= n; ++k) {
      M = inv[n - k] * M;
      if (min_log_stretch(M, ks, 32) < logC + lambda_bar * k) break;
      depth[n] = k;
    }
  }
  return depth;
}

EhtResult gamma_s_times(const OrbitLog& log, double C, double lambda_bar, int q) {
  if (q < 0) throw DomainError("gamma_s_times: q must be >= 0");
  const std::vector<int> depth = stable_control_depth(log, C, lambda_bar, q);
  EhtResult r;
  const long N = static_cast<long>(log.jacobians.size());
  for (long n = std::max<long>(q, 1); n <= N; ++n)
    if (depth[n] >= q) r.indices.push_back(n);
  fill_density(r, N);
  return r;
}

EhReport eh_statistics(const OrbitLog& log, double lambda_bar, double C,
                       const std::vector<int>& q_list, const std::vector<double>& theta_bar_list) {
  EhReport rep;
  rep.lambda_bar = lambda_bar;
  rep.C = C;
  const long N = static_cast<long>(log.size());
  rep.n = N;
  if (N == 0) return rep;
  for (long div : {8L, 4L, 2L, 1L}) {
    const long m = std::max(1L, N / div);
    double acc = 0;
    for (long k = 0; k < m; ++k) acc += log.lambda[k];
    rep.checkpoint_n.push_back(m);
    rep.birkhoff_checkpoints.push_back(acc / static_cast<double>(m));
  }
  rep.birkhoff_mean = rep.birkhoff_checkpoints.back();
  const double Lsup = *std::max_element(log.lambda.begin(), log.lambda.end());
  rep.pliss_bound = Lsup > lambda_bar ? (rep.birkhoff_mean - lambda_bar) / (Lsup - lambda_bar) : 0.0;

  const EhtResult ge = pliss_times(log.lambda, lambda_bar);
  const int qmax = q_list.empty() ? 0 : *std::max_element(q_list.begin(), q_list.end());
  if (qmax > N) throw PreconditionError("eh_statistics: orbit shorter than the largest q");
  const std::vector<int> depth = stable_control_depth(log, C, lambda_bar, qmax);
  for (int q : q_list) {
    EhtResult both;
    for (long i : ge.indices)
      if (i >= q && depth[i] >= q) both.indices.push_back(i);
    fill_density(both, N);
    rep.eh1prime.push_back({q, both.density_lower, both.density_upper});
    rep.window = both.window;
  }
  for (double tb : theta_bar_list) {
    EhtResult low;
    for (long k = 0; k < N; ++k)
      if (log.theta[k] < tb) low.indices.push_back(k + 1);
    fill_density(low, N);
    rep.eh2.push_back({tb, low.density_upper});
    rep.window = low.window;
  }
  return rep;
}

Json EhReport::to_json() const {
  Json j;
  j["lambda_bar"] = lambda_bar;
  j["C"] = C;
  j["n"] = n;
  j["window"] = window;
  j["birkhoff_mean"] = birkhoff_mean;
  j["pliss_bound"] = pliss_bound;
  Json cps = Json::array();
  for (std::size_t i = 0; i < checkpoint_n.size(); ++i)
    cps.push_back({{"n", checkpoint_n[i]}, {"mean", birkhoff_checkpoints[i]}});
  j["birkhoff_checkpoints"] = cps;
  Json qs = Json::array();
  for (const auto& r : eh1prime)
    qs.push_back({{"q", r.q}, {"density_lower", r.density_lower}, {"density_upper", r.density_upper}});
  j["eh1prime"] = qs;
  Json e2 = Json::array();
  for (const auto& r : eh2) e2.push_back({{"theta_bar", r.theta_bar}, {"freq", r.freq}});
  j["eh2"] = e2;
  return j;
}

}  // namespace ehsrb
