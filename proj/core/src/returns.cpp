#include <algorithm>
#include <cmath>
#include <random>

#include "ehsrb/curves.hpp"
#include "ehsrb/eht.hpp"
#include "ehsrb/errors.hpp"

namespace ehsrb {

namespace {

// g^t(z) for t the first exit time; inside the tube this is one flow call.
Vec exit_image(const System& sys, const Vec& z, long t) {
  if (!sys.slowed()) {
    Vec cur = z;
    for (long k = 0; k < t; ++k) cur = sys.base_map(cur);
    return sys.canonical(cur);
  }
  Vec cur = z;
  long left = t;
  if (!sys.in_tube(cur)) {
    cur = sys.base_map(cur);
    --left;
  }
  if (left > 0) cur = sys.from_local(sys.flow().advance(sys.to_local(cur), static_cast<double>(left)));
  return sys.canonical(cur);
}

int log2_class(long t) {
  int c = 0;
  while (t > 1) {
    t >>= 1;
    ++c;
  }
  return c;
}

}  // namespace

Json ItineraryReport::to_json() const {
  Json p = Json::object();
  for (const auto& [t, v] : pmf) p[std::to_string(t)] = v;
  return Json{{"pmf", p},
              {"mean_return", mean_return},
              {"R_fit", R_fit},
              {"max_window_mean", max_window_mean},
              {"max_itinerary_mean", max_itinerary_mean},
              {"mean_ok", mean_ok},
              {"K_fit", K_fit},
              {"K_first_half", K_first_half},
              {"K_second_half", K_second_half},
              {"cells", cells},
              {"unresolved", unresolved},
              {"returns", returns}};
}

ItineraryReport return_itineraries(const System& sys, const CurveChain& curve,
                                   const ItineraryParams& p, unsigned long long seed) {
  if (p.n_itineraries < 1 || p.length < 2 || p.window < 1)
    throw PreconditionError("itineraries: need n >= 1, length >= 2, window >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const double lo = curve.samples.front().sigma, hi = curve.samples.back().sigma;

  std::vector<std::vector<long>> its;
  ItineraryReport r;
  for (long i = 0; i < p.n_itineraries; ++i) {
    const double sigma = lo + (hi - lo) * (static_cast<double>(i) + U(rng)) / static_cast<double>(p.n_itineraries);
    Vec z = curve.steps == 0 ? curve.seed->eval(sigma).first : transport(sys, *curve.seed, sigma, curve.steps).z;
    std::vector<long> ts;
    for (long k = 0; k < p.length; ++k) {
      const long t = sys.first_exit(z, p.max_return);
      if (t > p.max_return) {
        ++r.unresolved;
        break;
      }
      ts.push_back(t);
      z = exit_image(sys, z, t);
    }
    its.push_back(std::move(ts));
  }

  double total = 0;
  for (const auto& ts : its)
    for (long t : ts) {
      r.pmf[t] += 1;
      total += 1;
    }
  if (total == 0) throw StatisticsError("itineraries: no resolved returns");
  r.returns = static_cast<long>(total);
  for (auto& [t, v] : r.pmf) {
    v /= total;
    r.mean_return += static_cast<double>(t) * v;
  }
  r.R_fit = (1 + p.mean_slack) * r.mean_return;

  for (const auto& ts : its) {
    if (ts.empty()) continue;
    double s = 0;
    for (long t : ts) s += static_cast<double>(t);
    r.max_itinerary_mean = std::max(r.max_itinerary_mean, s / static_cast<double>(ts.size()));
    if (static_cast<long>(ts.size()) < p.window) continue;
    double w = 0;
    for (long k = 0; k < static_cast<long>(ts.size()); ++k) {
      w += static_cast<double>(ts[k]);
      if (k >= p.window) w -= static_cast<double>(ts[k - p.window]);
      if (k + 1 >= p.window) r.max_window_mean = std::max(r.max_window_mean, w / static_cast<double>(p.window));
    }
  }
  r.mean_ok = r.max_window_mean <= r.R_fit;

  // P[T class | previous class] against the pooled class mass
  std::map<int, double> pooled;
  for (const auto& [t, v] : r.pmf) pooled[log2_class(t)] += v;
  auto k_over = [&](long from, long to, long* cells) {
    std::map<int, std::map<int, double>> joint;
    std::map<int, double> prev;
    for (const auto& ts : its)
      for (long n = std::max<long>(1, from); n < std::min<long>(to, static_cast<long>(ts.size())); ++n) {
        joint[log2_class(ts[n - 1])][log2_class(ts[n])] += 1;
        prev[log2_class(ts[n - 1])] += 1;
      }
    double k = 0;
    long c = 0;
    for (const auto& [a, row] : joint) {
      if (prev[a] < p.min_count) continue;
      for (const auto& [b, cnt] : row) {
        // only compare where the pooled law predicts enough samples
        if (pooled[b] * prev[a] < p.min_count) continue;
        k = std::max(k, cnt / prev[a] / pooled[b]);
        ++c;
      }
    }
    if (cells) *cells = c;
    return k;
  };
  r.K_fit = k_over(1, p.length, &r.cells);
  r.K_first_half = k_over(1, p.length / 2, nullptr);
  r.K_second_half = k_over(p.length / 2, p.length, nullptr);
  return r;
}

Json PartialSumReport::to_json() const {
  return Json{{"pieces", pieces}, {"min_unstable", min_unstable}, {"max_stable", max_stable}, {"C_fit", C_fit}};
}

PartialSumReport piece_partial_sums(const ConeField& field, const CurveChain& curve,
                                    const std::vector<CurvePiece>& pieces, int lattice) {
  const System& sys = field.system();
  PartialSumReport r;
  OrbitLogOptions o;
  o.lattice = lattice;
  for (const auto& pc : pieces) {
    if (pc.residual) continue;
    const Vec x = transport(sys, *curve.seed, 0.5 * (pc.sigma_lo + pc.sigma_hi), curve.steps).z;
    const OrbitLog log = orbit_log(field, x, pc.tau, o);
    double suffix = 0, prefix = 0;
    for (long j = pc.tau - 1; j >= 0; --j) {
      suffix += log.lambda_u[j] - log.defect[j];
      r.min_unstable = std::min(r.min_unstable, suffix);
    }
    for (long j = 0; j < pc.tau; ++j) {
      prefix += log.lambda_s[j];
      r.max_stable = std::max(r.max_stable, prefix);
    }
    ++r.pieces;
  }
  r.C_fit = std::max({-r.min_unstable, r.max_stable, 0.0}) + 0.0;  // no -0
  return r;
}

}  // namespace ehsrb
