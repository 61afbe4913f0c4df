#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include "ehsrb/cones.hpp"
#include "ehsrb/io.hpp"
#include "ehsrb/stats.hpp"
#include "ehsrb/system.hpp"

namespace ehsrb {

// Arc-length parametrised initial curve, sigma in [0, length].
struct SeedCurve {
  std::function<std::pair<Vec, Vec>(double)> eval;  // (point, unit tangent)
  double length = 0.0;

  // Straight segment in (theta, y) coordinates.
  static std::shared_ptr<const SeedCurve> segment(const Vec& start, const Vec& direction,
                                                  double length);
};

struct CurveSample {
  double sigma = 0.0;
  Vec z;
  Vec tangent;             // unit tangent of the image curve
  double log_phi = 0.0;    // log |D g^n restricted to the seed tangent|
  std::vector<Vec> history;  // z_0 .. z_n when retained
};

// Sampled image g^n(W) of a seed curve, samples ordered by sigma.
struct CurveChain {
  std::shared_ptr<const SeedCurve> seed;
  long steps = 0;
  bool keep_history = false;
  std::vector<CurveSample> samples;

  std::size_t size() const { return samples.size(); }
  double image_length() const;  // polyline length in the flat (theta, y) metric
  double seed_length() const { return samples.back().sigma - samples.front().sigma; }
};

struct EvolveOptions {
  double h_max = 0.01;              // max distance of consecutive image samples
  std::size_t max_samples = 4'000'000;
};

CurveChain make_chain(std::shared_ptr<const SeedCurve> seed, double sigma_lo, double sigma_hi,
                      std::size_t n_samples, bool keep_history = false);

// Seed point sigma pushed through `steps` iterates from scratch.
CurveSample transport(const System& sys, const SeedCurve& seed, double sigma, long steps,
                      bool keep_history = false);

// Pushes every sample through g^n, accumulating log phi and inserting seed
// points wherever consecutive images are more than h_max apart.
void evolve_curve(const System& sys, CurveChain& chain, long n, const EvolveOptions& opt = {});

// Inserts transported seed midpoints until consecutive samples are at most
// h_max apart (chain.steps unchanged).
void refine_chain(const System& sys, CurveChain& chain, const EvolveOptions& opt);

// Sub-chain of samples [lo, hi] (inclusive).
CurveChain sub_chain(const CurveChain& c, std::size_t lo, std::size_t hi);

struct GeometryCaps {
  double gamma_bar = 0.5;   // |D psi| cap
  double kappa_bar = 5.0;   // Holder cap of D psi
  double r_bar = 0.2;       // size
  int holder_stencil = 12;  // pairs (i, i + 2^m), m < stencil
};

// Graph of psi: B_G(r) -> F over the base point, G = tangent at the base and
// F = cross-section.
struct AdmissibleCurve {
  std::shared_ptr<const SeedCurve> seed;
  long steps = 0;
  std::vector<CurveSample> samples;
  std::size_t base_index = 0;
  Vec base;
  Vec G;
  Mat F;
  double alpha = 0.5;
  std::vector<double> u;
  std::vector<Vec> psi;
  std::vector<Vec> dpsi;
  double gamma_geom = 0.0;
  double kappa = 0.0;
  double r = 0.0;           // min(-u.front(), u.back())
  double angle_GF = 0.0;
  bool is_graph = true;     // u strictly monotone along the samples

  bool satisfies(const GeometryCaps& caps, double theta_bar = 0.0) const;
  double seed_lo() const { return samples.front().sigma; }
  double seed_hi() const { return samples.back().sigma; }
};

AdmissibleCurve graph_view(const System& sys, const CurveChain& c, std::size_t lo, std::size_t hi,
                           std::size_t base_index, int holder_stencil = 12);

// Max Holder quotient |t_i - t_j| / s_ij^alpha of the unit tangent along the chain.
double holder_curvature(const System& sys, const std::vector<CurveSample>& s, double alpha,
                        int stencil = 12);

// Splits [lo, hi] into maximal admissible graphs, growing each piece from its
// base outward until a cap is hit. The first piece is based at `center`
// (default: arc-length midpoint); remainders are rebased at their midpoints.
std::vector<AdmissibleCurve> trim_to_admissible(const System& sys, const CurveChain& c,
                                                const GeometryCaps& caps,
                                                std::optional<std::size_t> center = std::nullopt);

struct DecompositionParams {
  double epsilon = 0.1;        // image lengths in [epsilon, 2 epsilon]
  double holder_L = 50.0;      // Holder curvature bound for membership in the class
  double cone_half_angle = 0.4;
  long max_return = 100000;
  int merge_cap = 32;
  double boundary_tol = 1e-12; // sigma tolerance of level-set boundaries
  std::size_t image_samples = 33;
  double h_max = 0.005;
  long max_resolved_tau = 400;  // deeper level sets are lumped into residual pieces
};

struct CurvePiece {
  long parent = 0;
  double sigma_lo = 0.0;
  double sigma_hi = 0.0;
  long tau = 1;
  double image_length = 0.0;
  int merges = 0;
  bool residual = false;        // lumped level sets beyond max_resolved_tau
  bool image_outside_z = true;
  CurveChain image;  // g^tau of the piece (samples), empty when not kept

  Json to_json() const;
};

// Partition of the curve into pieces with inducing times; each image
// g^tau(W_j) lies outside Z with length in [eps, 2 eps].
std::vector<CurvePiece> admissible_decomposition(const System& sys, const CurveChain& curve,
                                                 const DecompositionParams& p = {},
                                                 long parent = 0, bool keep_images = false);

// Length-weighted histogram of first-exit times of uniformly sampled points.
IntHistogram return_time_histogram(const System& sys, const CurveChain& curve, long n_points,
                                   unsigned long long seed, long max_return, long* unresolved = nullptr);
void write_histogram_csv(std::ostream& os, const IntHistogram& counts, const IntHistogram& mass);

struct TailFit {
  double exponent = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double t_min = 0.0;
  double t_max = 0.0;
  long bins = 0;
  long occupied = 0;
  LinearFit fit;
};

// Log-log least squares on log-spaced bins of the histogram over [t_min, t_max].
// Needs >= min_occupied occupied integer values in the range; bins holding
// fewer than min_bin_count samples are left out of the regression.
TailFit return_time_tail_fit(const IntHistogram& h, double t_min, double t_max,
                             int bins_per_decade = 20, long min_occupied = 50,
                             double min_bin_count = 10.0);

struct DistortionSample {
  double log_ratio = 0.0;
  double image_distance = 0.0;
};

// log |Dg^tau|_{TW}(x)| - log |Dg^tau|_{TW}(y)| for seed points x, y of the piece.
DistortionSample distortion_ratio(const System& sys, const CurveChain& curve,
                                  const CurvePiece& piece, double sigma_x, double sigma_y);

// Return-time itineraries of the first-return map on U \ Z started from
// uniformly sampled curve points.
struct ItineraryParams {
  long n_itineraries = 1000;
  long length = 1000;        // returns per itinerary
  long max_return = 100000;  // unresolved returns end the itinerary
  long window = 1000;        // windowed mean of t_k (default: whole itinerary)
  double mean_slack = 0.5;   // R_fit = (1 + slack) * sum T p(T)
  double min_count = 50;     // cells with fewer samples are not compared
};

struct ItineraryReport {
  IntHistogram pmf;          // p(T), pooled over all returns
  double mean_return = 0.0;  // sum T p(T)
  double R_fit = 0.0;
  double max_window_mean = 0.0;
  double max_itinerary_mean = 0.0;
  bool mean_ok = false;
  // max over (previous-return class, T class) of P[T | class] / p(T)
  double K_fit = 0.0;
  double K_first_half = 0.0;   // depths n <= length / 2
  double K_second_half = 0.0;
  long cells = 0;
  long unresolved = 0;
  long returns = 0;

  Json to_json() const;
};

ItineraryReport return_itineraries(const System& sys, const CurveChain& curve,
                                   const ItineraryParams& p, unsigned long long seed);

// Partial sums of the cone rates along the orbit of each piece's midpoint for
// tau iterates: min over k of sum_{j=k}^{tau-1} (lambda_u - defect) and max over
// k of sum_{j<k} lambda_s.
struct PartialSumReport {
  long pieces = 0;
  double min_unstable = 0.0;
  double max_stable = 0.0;
  double C_fit = 0.0;  // max(-min_unstable, max_stable, 0)
  Json to_json() const;
};

PartialSumReport piece_partial_sums(const ConeField& field, const CurveChain& curve,
                                    const std::vector<CurvePiece>& pieces, int lattice = 64);

struct Window {
  double center = 0.0;
  double radius = 0.0;
  double lo() const { return center - radius; }
  double hi() const { return center + radius; }
};

struct CoverResult {
  std::vector<std::size_t> selected;             // indices of chosen windows
  std::vector<std::vector<std::size_t>> classes; // partition of `selected`
  int multiplicity = 0;                          // max overlap among selected
};

// Greedy separation (largest radius first, skipping covered centers) plus
// interval-graph colouring of the selected windows.
CoverResult besicovitch_cover(const std::vector<Window>& w);
bool cover_is_valid(const std::vector<Window>& w, const CoverResult& c);

struct StandardPair {
  AdmissibleCurve curve;
  std::vector<double> rho;  // density per sample
};

// rho_n^x(z) = phi_n(x) / phi_n(g^-n z) with x the base point.
StandardPair standard_pair_from(const AdmissibleCurve& c);

struct StandardPairChecks {
  double C = 2.0;           // backward contraction constant
  double C_stable = 1.0;    // constant of the stable-control window
  double lambda_bar = 0.1;
  double L = 10.0;
  int q = 5;
  double beta = 0.5;
  int n_pairs = 64;
  GeometryCaps caps;
};

struct StandardPairReport {
  bool geometry = false;
  bool backward_contraction = false;
  bool density_bounds = false;
  bool density_holder = false;
  bool stable_control = false;
  double measured_C = 0.0;
  double rho_min = 0.0;
  double rho_max = 0.0;
  double rho_holder = 0.0;
  double stable_fraction = 0.0;

  bool all() const {
    return geometry && backward_contraction && density_bounds && density_holder && stable_control;
  }
  Json to_json() const;
};

StandardPairReport verify_standard_pair(const System& sys, const ConeField& field,
                                        const StandardPair& pair, const StandardPairChecks& k);

}  // namespace ehsrb
