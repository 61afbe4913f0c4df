#pragma once

#include <limits>
#include <ostream>
#include <utility>
#include <vector>

#include "ehsrb/linalg.hpp"
#include "ehsrb/ode.hpp"

namespace ehsrb {

// Rates of A = diag(gamma, -beta, ...), slowdown exponent and the two radii.
// Local coordinates put the unstable direction first.
struct PassageParams {
  double gamma = 0.6931471805599453;
  double beta = 1.3862943611198906;
  double alpha = 0.5;
  double r0 = 0.05;
  double r1 = 0.15;
  int dim = 3;

  double lambda() const { return gamma + beta; }
  // Radial rate: d/dt |x|^-alpha = alpha * xi(tan theta) inside Y.
  double xi(double s) const;
  void validate() const;
};

struct TraceSample {
  double t = 0.0;
  Vec x;
  Vec v;
  double tan_theta = 0.0;
  double tan_rho = 0.0;
  double norm_x = 0.0;
  double J = 0.0;              // lambda * int_0^t |x|^alpha
  double log_expansion = 0.0;  // int_0^t <v^, DX v^>
  bool on_grid = false;        // uniform-grid sample (step endpoints are not)
};

struct TraceOptions {
  double sample_dt = 0.01;  // grid spacing is min(sample_dt, 0.01 * T0)
  double horizon = 1e6;
  bool backward = false;  // integrate -X until the exit sphere (time runs 0..T0)
};

struct FlowTrace {
  PassageParams params;
  std::vector<TraceSample> samples;
  double exit_time = 0.0;
  double sample_spacing = 0.0;
  bool backward = false;

  std::vector<DenseSegment> segments;  // dense output, last one clipped at exit_time

  std::size_t size() const { return samples.size(); }
  const TraceSample& front() const { return samples.front(); }
  const TraceSample& back() const { return samples.back(); }
  // Position at time t from the dense output.
  Vec position_at(double t) const;
  TraceSample sample_at(double t) const;  // dense output, on_grid unset
  double tan_theta_at(double t) const;
  void write_csv(std::ostream& os) const;
};

// Vector field X(x) = psi(|x|) A x on local coordinates near the fixed point.
class PassageFlow {
 public:
  explicit PassageFlow(PassageParams p, OdeOptions opt = {});

  const PassageParams& params() const { return p_; }
  const OdeOptions& options() const { return opt_; }
  int dim() const { return p_.dim; }

  double psi(double r) const;
  double dpsi(double r) const;
  Vec field(const Vec& x) const;
  Mat field_jacobian(const Vec& x) const;  // DX(x); the Lie derivative is DX v

  // Time-t flow (t may be negative).
  Vec advance(const Vec& x, double t) const;
  std::pair<Vec, Mat> advance_with_jacobian(const Vec& x, double t) const;
  std::pair<Vec, Vec> advance_with_tangent(const Vec& x, const Vec& v, double t) const;

  // Exit time from Y for a point with |x| <= r0; 0 if it leaves immediately.
  double exit_time(const Vec& x, double horizon = 1e6) const;
  // Time interval (t_in, t_out) during which the orbit lies in the open ball
  // of radius `radius`; empty (t_in >= t_out) if it never enters for t >= 0.
  // With `backward`, the same for the time-reversed flow.
  std::pair<double, double> ball_window(const Vec& x, double radius, double horizon = 1e6,
                                        bool backward = false) const;

  FlowTrace trace(const Vec& x0, const Vec& v0, const TraceOptions& opt = {}) const;

  // Closed-form minimum of |e^{At} x| over t in [0, t1] (linear flow).
  double linear_min_norm(const Vec& x, double t1, bool backward = false) const;

 private:
  OdeVec rhs_state(const OdeVec& y) const;
  OdeVec rhs_jacobian(const OdeVec& y) const;
  OdeVec rhs_tangent(const OdeVec& y) const;
  OdeVec rhs_trace(const OdeVec& y, double sign) const;

  PassageParams p_;
  OdeOptions opt_;
  // Hermite blend coefficients on [r0, r1] in s = (r - r0)/(r1 - r0).
  double h0_, m0_;
};

}  // namespace ehsrb
