#pragma once

#include <ostream>
#include <vector>

#include "ehsrb/cones.hpp"
#include "ehsrb/io.hpp"
#include "ehsrb/system.hpp"

namespace ehsrb {

// L: log bound on |Dg|, |Dg^-1|; L1: log bound on the per-step cone-angle
// distortion; L2 = max(L1 / alpha, L (1 + 2 / alpha)) is the cutoff value
// used for the effective rate when the cone angle is small.
struct GlobalBounds {
  double L = 0.0;
  double L1 = 0.0;
  double L2 = 0.0;
};

GlobalBounds estimate_global_bounds(const System& sys, long n_samples, unsigned long long seed);

struct OrbitLogOptions {
  double theta_bar = 0.1;
  double L2 = 10.0;
  int lattice = 64;
};

struct OrbitLog {
  Vec x0;
  double theta_bar = 0.0;
  double L2 = 0.0;
  std::vector<Vec> positions;   // z_0 .. z_n
  std::vector<Mat> jacobians;   // Dg(z_k), k < n
  std::vector<ConePair> cones;  // at z_k, k <= n
  std::vector<double> lambda_u, lambda_s, defect, lambda, theta, lambda_e;  // k < n
  std::vector<char> in_z;

  std::size_t size() const { return lambda_u.size(); }
  void write_csv(std::ostream& os) const;
};

OrbitLog orbit_log(const ConeField& field, const Vec& x0, long n, const OrbitLogOptions& opt = {});

struct EhtResult {
  std::vector<long> indices;  // sorted, within [1, n]
  double density_lower = 0.0;
  double density_upper = 0.0;
  long window = 0;
  long length = 0;
};

// Windowed density of a sorted index set over the last half of [1, n].
void fill_density(EhtResult& r, long n);

// n in [1, N] with sum_{j=k}^{n-1} a_j >= lambda_bar (n - k) for all 0 <= k < n.
EhtResult pliss_times(const std::vector<double>& a, double lambda_bar);
EhtResult pliss_times_bruteforce(const std::vector<double>& a, double lambda_bar);

// Largest k <= q_max (per time n) such that the backward stable-cone growth
// holds for all j <= k; -1 means it already fails at k = 0.
std::vector<int> stable_control_depth(const OrbitLog& log, double C, double lambda_bar, int q_max);

// Times n in [q, N] with |Dg^-k(g^n x) v| >= C e^{lambda_bar k} |v| for all
// 0 <= k <= q and v in the stable cone at g^n x.
EhtResult gamma_s_times(const OrbitLog& log, double C, double lambda_bar, int q);

struct EhReport {
  double lambda_bar = 0.0;
  double C = 1.0;
  long n = 0;
  std::vector<double> birkhoff_checkpoints;  // running mean of lambda at n/8, n/4, n/2, n
  std::vector<long> checkpoint_n;
  double birkhoff_mean = 0.0;
  double pliss_bound = 0.0;  // (chi - lambda_bar) / (L - lambda_bar), chi = Birkhoff mean
  struct QRow {
    int q = 0;
    double density_lower = 0.0;
    double density_upper = 0.0;
  };
  std::vector<QRow> eh1prime;
  struct ThetaRow {
    double theta_bar = 0.0;
    double freq = 0.0;
  };
  std::vector<ThetaRow> eh2;
  long window = 0;

  Json to_json() const;
};

EhReport eh_statistics(const OrbitLog& log, double lambda_bar, double C,
                       const std::vector<int>& q_list, const std::vector<double>& theta_bar_list);

}  // namespace ehsrb
