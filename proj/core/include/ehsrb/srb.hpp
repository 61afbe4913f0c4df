#pragma once

#include <limits>
#include <map>
#include <ostream>
#include <vector>

#include "ehsrb/curves.hpp"
#include "ehsrb/io.hpp"
#include "ehsrb/stats.hpp"
#include "ehsrb/system.hpp"

namespace ehsrb {

// Axis-aligned boxes over theta in [0, 2pi) and y in [-1, 1]^(d-1).
struct GridSpec {
  int dim = 3;
  int bins = 128;

  long long box_index(const Vec& z) const;
  long long n_boxes() const;
  Json to_json() const;
};

// Weighted samples with physical (un-normalised) mass.
struct EmpiricalMeasure {
  GridSpec grid;
  std::vector<Vec> points;
  std::vector<double> weights;
  std::vector<long> leaf;  // provenance: piece id per sample, -1 when untracked
  std::vector<double> arc; // arc-length coordinate within the leaf
  std::map<long long, double> boxes;
  double total_mass = 0.0;

  std::size_t size() const { return points.size(); }
  void add(const Vec& z, double w, long leaf_id = -1, double arc_coord = 0.0);
  void rebuild_boxes();
  double box_mass() const;
  // Mass per bin of coordinate `axis`.
  std::vector<double> marginal(int axis, int bins) const;
  std::vector<std::pair<double, double>> angles() const;  // (theta, weight) pairs
  double angular_ks() const;
  EmpiricalMeasure normalized() const;

  void write_box_csv(std::ostream& os) const;
  Json sidecar(const Json& provenance) const;
  void write_marginals_csv(std::ostream& os, int bins) const;
};

// Fixed family of 64 smooth functions on U, |phi| <= 1.
class TestFamily {
 public:
  explicit TestFamily(int dim);
  static constexpr int kSize = 64;
  double eval(int j, const Vec& z) const;
  std::vector<double> values(const Vec& z) const;
  std::vector<double> moments(const EmpiricalMeasure& m) const;
  static double distance(const std::vector<double>& a, const std::vector<double>& b);
  static const char* name() { return "trig-bump-64"; }

 private:
  int dim_;
  std::vector<Vec> centers_;
};

// Arc-length (trapezoid in sigma) weights of the samples of a chain at step 0.
std::vector<double> seed_weights(const CurveChain& c);

struct PushforwardOptions {
  double h_max = std::numeric_limits<double>::infinity();  // no refinement by default
  bool track_leaves = false;
};

// g^n_* m_W: curve samples transported with their seed weights.
EmpiricalMeasure pushforward_leaf_volume(const System& sys, const CurveChain& curve, long n,
                                         const GridSpec& grid, const PushforwardOptions& opt = {});

struct CesaroResult {
  EmpiricalMeasure measure;          // (1/n) sum_{k<n} g^k_* m_W
  std::vector<double> moments;       // of the measure
  std::vector<double> image_moments; // of g_* of the measure
  double invariance_defect = 0.0;    // max_j |difference|
  double defect_bound = 0.0;         // 2 mass / n
};

CesaroResult cesaro_measure(const System& sys, const CurveChain& curve, long n, const GridSpec& grid,
                            bool keep_samples = true);

// Streaming moments of the Cesaro measures at the checkpoints (ascending).
std::vector<std::vector<double>> cesaro_moment_path(const System& sys, const CurveChain& curve,
                                                    const std::vector<long>& checkpoints);

struct LyapunovEstimate {
  std::vector<double> exponents;  // descending
  std::vector<double> se;
  long n = 0;
  Json to_json() const;
};

LyapunovEstimate lyapunov_exponents(const System& sys, const Vec& x0, long n, long burn_in = 0,
                                    std::size_t batches = 32);

// Birkhoff average of test function j with batch-means error.
MeanSe birkhoff_average(const System& sys, const TestFamily& fam, int j, const Vec& x0, long n);

struct LeafDiagnostic {
  long leaf = 0;
  std::size_t samples = 0;
  double density_min = 0.0;
  double density_max = 0.0;
  double ratio = 0.0;
  bool concentrated = false;
};

struct LeafReport {
  std::vector<LeafDiagnostic> leaves;
  long skipped = 0;
  double max_ratio = 0.0;
  bool any_concentrated = false;
  Json to_json() const;
};

// Conditional density of the measure w.r.t. leaf volume per tagged leaf:
// sample weight over its arc-length quadrature weight, smoothed over
// `smooth` neighbours, normalised by leaf mass / leaf length.
LeafReport leaf_absolute_continuity(const EmpiricalMeasure& m, double ratio_cap = 100.0,
                                    std::size_t min_samples = 8, int smooth = 1);

}  // namespace ehsrb
