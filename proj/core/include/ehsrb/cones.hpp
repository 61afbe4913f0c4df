#pragma once

#include <optional>
#include <vector>

#include "ehsrb/linalg.hpp"
#include "ehsrb/system.hpp"

namespace ehsrb {

// v lies in the cone iff w = transform * v satisfies
//   unstable: |w_s| <= tan(half_angle) |w_0|
//   stable:   |w_0| <= tan(half_angle) |w_s|
// The reference cones have transform = identity (axes of the local frame).
struct Cone {
  enum class Kind { kUnstable, kStable };
  Kind kind = Kind::kUnstable;
  double half_angle = 0.4;
  Mat transform;

  bool contains(const Vec& v, double slack = 0.0) const;
  // Angular distance from the cone boundary in the canonical frame; > 0 inside.
  double margin(const Vec& v) const;
  // Unit ray on the cone boundary, parametrised by phi (2D: phi in {0, pi}).
  Vec boundary_ray(double phi) const;
  Vec axis() const;
  bool is_reference() const;
};

struct ConePair {
  Cone unstable;
  Cone stable;
};

struct ConeFieldSpec {
  double half_angle = 0.4;     // reference cone width outside Z
  int lattice = 256;           // Fibonacci guard points for extremization (3D)
  int boundary_rays = 256;
  int max_backward = 100000;   // iterates searched for the entry point of a Z orbit
};

// Reference cones outside Z; inside Z the unstable cone is pushed forward from
// the entry point of the backward orbit and the stable cone pulled back from
// the exit point, so the field is Dg-invariant along passages.
class ConeField {
 public:
  ConeField(const System& sys, ConeFieldSpec spec = {});
  const System& system() const { return *sys_; }
  const ConeFieldSpec& spec() const { return spec_; }

  ConePair reference() const;
  ConePair at(const Vec& z) const;

 private:
  const System* sys_;
  ConeFieldSpec spec_;
};

ConePair reference_cones(int dim, double half_angle);

// Transforms pushed through long passages describe cones thinner than the
// stretch extremization can resolve; their conditioning is clamped here.
inline constexpr double kMaxConeConditioning = 1e6;
Mat regularize_transform(const Mat& M);

struct RateSample {
  double lambda_u = 0.0;
  double lambda_s = 0.0;
  double defect = 0.0;
  double lambda = 0.0;
  double theta = 0.0;
};

// min / max of log |D v| over unit v in a cone.
double min_log_stretch(const Mat& D, const Cone& c, int lattice = 256);
double max_log_stretch(const Mat& D, const Cone& c, int lattice = 256);

// Minimal angle between the two closed cones; 0 when they meet.
double cone_angle(const ConePair& p);

RateSample rates_from_jacobian(const Mat& D, const ConePair& p, double alpha,
                               int lattice = 256);
RateSample cone_rates(const System& sys, const Vec& z, const ConePair& p, int lattice = 256);

struct PushReport {
  ConePair image;
  double unstable_margin = 0.0;  // min margin of pushed boundary rays in the target
  double stable_margin = 0.0;    // same for D^-1 applied to the target stable cone
  bool contained = false;        // both margins >= -tol
};

// Pushes the cones at z to g(z) and compares with `target` (the field at g(z)).
PushReport push_cone(const Mat& D, const ConePair& source, const ConePair& target,
                     int rays = 256, double tol = 1e-12);
PushReport push_cone(const System& sys, const ConeField& field, const Vec& z,
                     int rays = 256);

struct C1Violation {
  Vec z;
  long return_time = 0;
  double unstable_margin = 0.0;
  double stable_margin = 0.0;
};

struct C1Report {
  long samples = 0;
  long through_z = 0;
  long unresolved = 0;
  long violations = 0;
  double worst_unstable_margin = 0.0;
  double worst_stable_margin = 0.0;
  double min_angle = 0.0;
  std::vector<C1Violation> examples;  // first few violations
};

// Cone invariance for the first-return map G on U \ Z: half of the starting
// points are uniform in U \ Z, the other half start just before an entry into Z.
C1Report check_c1(const System& sys, double half_angle, long n_samples, unsigned long long seed,
                  long max_return = 20000, int rays = 256);

}  // namespace ehsrb
