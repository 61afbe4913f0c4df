#include "ehsrb/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>

#include "ehsrb/errors.hpp"

namespace ehsrb {

LinearFit linear_regression(const std::vector<double>& x, const std::vector<double>& y,
                            double level) {
  if (x.size() != y.size()) throw StatisticsError("regression: size mismatch");
  const std::size_t n = x.size();
  if (n < 3) throw StatisticsError("regression needs at least 3 points");
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0)) throw StatisticsError("regression: abscissae are all equal");
  LinearFit f;
  f.n = n;
  f.level = level;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    sse += r * r;
  }
  f.slope_se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
  boost::math::students_t dist(static_cast<double>(n - 2));
  const double q = boost::math::quantile(dist, 0.5 + level / 2);
  f.slope_lo = f.slope - q * f.slope_se;
  f.slope_hi = f.slope + q * f.slope_se;
  return f;
}

MeanSe batch_means(const std::vector<double>& s, std::size_t n_batches) {
  MeanSe r;
  if (s.empty()) return r;
  r.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  n_batches = std::min(n_batches, s.size());
  if (n_batches < 2) return r;
  const std::size_t len = s.size() / n_batches;
  std::vector<double> means(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    double acc = 0;
    for (std::size_t i = b * len; i < (b + 1) * len; ++i) acc += s[i];
    means[b] = acc / static_cast<double>(len);
  }
  const double mm = std::accumulate(means.begin(), means.end(), 0.0) / n_batches;
  double var = 0;
  for (double m : means) var += (m - mm) * (m - mm);
  var /= static_cast<double>(n_batches - 1);
  r.se = std::sqrt(var / static_cast<double>(n_batches));
  r.batches = n_batches;
  return r;
}

double ks_uniform(std::vector<std::pair<double, double>> vw, double lo, double hi) {
  if (vw.empty()) throw StatisticsError("ks_uniform: empty sample");
  std::sort(vw.begin(), vw.end());
  double total = 0;
  for (const auto& p : vw) total += p.second;
  if (!(total > 0)) throw StatisticsError("ks_uniform: zero total weight");
  double cum = 0, d = 0;
  for (std::size_t i = 0; i < vw.size(); ++i) {
    const double u = (vw[i].first - lo) / (hi - lo);
    d = std::max(d, std::abs(cum / total - u));
    // ties share one step
    while (i + 1 < vw.size() && vw[i + 1].first == vw[i].first) cum += vw[i++].second;
    cum += vw[i].second;
    d = std::max(d, std::abs(cum / total - u));
  }
  return d;
}

}  // namespace ehsrb
