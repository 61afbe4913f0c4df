#pragma once

#include <random>
#include <string>
#include <vector>

#include "ehsrb/io.hpp"
#include "ehsrb/passage.hpp"
#include "ehsrb/stats.hpp"

namespace ehsrb {

// Relative residual |tan th(t2) - e^{-J} tan th(t1)| / tan th(t1), J by trapezoid on the trace.
double check_tantheta_law(const FlowTrace& tr, double t1, double t2);

struct RadialResidual {
  double max_abs = 0.0;  // raw central-difference residual
  double scaled = 0.0;   // max_abs / spacing^2
  std::size_t points = 0;
};
RadialResidual check_radial_ode(const FlowTrace& tr);

struct ChevronResult {
  double upper_violation = 0.0;  // max excess over the two upper lines (<= 0 when they hold)
  bool upper_ok = false;
  double beta_fit = 0.0;         // largest beta' for the lower line on [0, kappa T0]
  double gamma_fit = 0.0;        // largest gamma' on [kappa T0, T0]
  double max_second_difference = 0.0;
  bool concave = false;
};
ChevronResult check_chevron_bounds(const FlowTrace& tr, double kappa);

// Time at which tan theta equals s (bisection on the dense output, tol 1e-10 in t).
double locate_tan_theta(const FlowTrace& tr, double s);

struct TsResult {
  double Ts = 0.0;
  double T0 = 0.0;
  double bound = 0.0;
  bool upper = false;  // s^2 > gamma/beta: Ts <= chi T0; otherwise Ts >= chi' T0
  bool holds = false;
  double margin = 0.0;
};
TsResult check_ts_bounds(const FlowTrace& tr, double s);

struct TanRhoResult {
  double max_tan_rho = 0.0;
  double cone_margin = 0.0;      // min(alpha/2 - tan rho)
  bool cone_ok = false;
  double envelope_margin = 0.0;  // min(envelope - tan rho)
  bool envelope_ok = false;
  double T1 = 0.0;
};
TanRhoResult check_tanrho_bounds(const FlowTrace& tr, double tol = 1e-9);

struct CotRhoResult {
  double max_cot_rho = 0.0;
  bool ok = false;
};
// Backward trace with v0 in the stable cone (cot rho <= alpha/2).
CotRhoResult check_cotrho_backward(const FlowTrace& backward, double tol = 1e-9);

// Trapezoid values of int |x|^alpha tan rho and int |x|^alpha tan theta on [t1, t2].
double integral_tan_rho(const FlowTrace& tr, double t1, double t2);
double integral_tan_theta(const FlowTrace& tr, double t1, double t2);

struct ExpansionResult {
  double log_expansion = 0.0;   // int <v^, DX v^>
  double direct = 0.0;          // log(|v(T0)| / |v0|)
  double identity_error = 0.0;
  double min_running = 0.0;     // min over t of the running log expansion
  double min_rate = 0.0;        // min instantaneous <v^, DX v^>
  double t0 = 0.0;              // max(0, T_s), s = s_factor sqrt(gamma/beta)
  double escaping_term = 0.0;   // (1 + 1/alpha) log(1 + r0^alpha gamma alpha (T0 - t0))
};
ExpansionResult expansion_along_passage(const FlowTrace& tr, double s_factor = 2.0);

// Closed forms on the unstable axis from |x0| = a to r0.
double axis_log_expansion(const PassageParams& p, double a);   // (1 + alpha) log(r0 / a)
double axis_gamma_integral(const PassageParams& p, double a);  // gamma int |x|^alpha dt

struct PairDistortion {
  double delta_log_expansion = 0.0;
  double image_distance = 0.0;
  double constant = 0.0;      // delta / d^alpha
  double eta0 = 0.0;
  double eta_constant = 0.0;  // max_t eta / (envelope * d^alpha)
  double T = 0.0;             // common time T0(x) + 1 of the images
  double T0x = 0.0, T0y = 0.0;
};
// Two points of Y with tangents, pushed through their passages.
PairDistortion pair_distortion_through_Z(const PassageFlow& flow, const Vec& x, const Vec& y,
                                         const Vec& v, const Vec& w, double sample_dt = 0.01);

// Entry point on the exit sphere at polar angle theta0 from the unstable axis.
Vec entry_point(const PassageParams& p, double theta0, const Vec& stable_dir);
// Angle range on the sphere whose passages last between T_lo and T_hi.
std::pair<double, double> entry_angles_for(const PassageFlow& flow, double T_lo, double T_hi);

struct OracleConfig {
  long n_traces = 1000;
  unsigned long long seed = 7;
  double sample_dt = 0.01;
  double fine_dt = 0.001;       // spacing for the tan theta / radial residuals
  double T_lo = 2.0;            // passage durations of the main ensemble
  double T_hi = 80.0;
  double kappa = 0.5;
  double floor_factor = 0.05;   // beta', gamma' floor = factor * min(beta, gamma)
  double tan_tol = 1e-6;
  double radial_tol = 1e-5;
  double identity_tol = 1e-8;
  std::vector<double> T0_bins{5.0, 20.0, 80.0};
  double bin_halfwidth = 0.1;   // relative
  int batches = 10;
  int per_batch = 30;
  double transient_ratio = 16.0;  // beta / gamma of the contraction regime
  double pair_image_gap = 0.01;  // image separation of distortion pairs
};

struct LawResult {
  std::string law;
  long n_traces = 0;
  double max_residual = 0.0;
  long violations = 0;
  Json fitted_constants = Json::object();
  Json T0_bins = Json::array();
  bool pass = false;
  Json to_json() const;
};

// Regression of per-bin batch maxima on T0; passes when the slope CI holds 0.
LawResult uniformity_law(const std::string& name, const std::vector<double>& bins,
                         const std::vector<std::vector<double>>& batch_max);

std::vector<LawResult> run_residual_laws(const PassageParams& p, const OracleConfig& c,
                                         const OdeOptions& ode = {});
std::vector<LawResult> run_uniformity_laws(const PassageParams& p, const OracleConfig& c,
                                           const OdeOptions& ode = {});
Json oracle_report(const std::vector<LawResult>& laws);

}  // namespace ehsrb
