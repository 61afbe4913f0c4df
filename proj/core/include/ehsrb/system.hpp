#pragma once

#include <optional>
#include <string>
#include <utility>

#include "ehsrb/linalg.hpp"
#include "ehsrb/passage.hpp"

namespace ehsrb {

struct SystemSpec {
  double gamma = 0.6931471805599453;  // log 2
  double beta = 1.3862943611198906;   // log 4
  double alpha = 0.5;
  double r0 = 0.05;
  double r1 = 0.15;
  double blend_width = 0.5;
  int base_expansion = 2;
  double contraction = 0.25;
  double offset = 0.3;

  // Throws ConfigError naming the first violated constraint.
  void validate() const;
  PassageParams passage(int dim) const;
  bool operator==(const SystemSpec&) const = default;
};

enum class ModelKind { kSolenoid, kLocal };
enum class MapVariant { kBase, kSlowed };
enum class Region { kInsideY, kInsideZ, kBlend, kOutside };

std::string to_string(ModelKind);
std::string to_string(MapVariant);
std::string to_string(Region);

// Solid-torus solenoid f(theta, y) = (m theta, c y + o(theta)) and its slowed
// version g. Coordinates (theta, y) with theta in [0, 2pi) and |y| <= 1
// (y in R^2 for the solenoid, R for the 2D local model). Local coordinates at
// the fixed point p are x = (wrap(theta), y - y*), in which f = diag(m, c).
class System {
 public:
  System(SystemSpec spec, ModelKind kind = ModelKind::kSolenoid,
         MapVariant variant = MapVariant::kSlowed, OdeOptions ode = {});

  const SystemSpec& spec() const { return spec_; }
  ModelKind kind() const { return kind_; }
  MapVariant variant() const { return variant_; }
  int dim() const { return dim_; }
  const PassageFlow& flow() const { return flow_; }
  bool slowed() const { return variant_ == MapVariant::kSlowed; }

  Vec step(const Vec& z) const;
  Mat jacobian(const Vec& z) const;
  std::pair<Vec, Mat> step_with_jacobian(const Vec& z) const;
  std::pair<Vec, Vec> step_with_tangent(const Vec& z, const Vec& v) const;
  // k iterates of z with a tangent vector; each sojourn in the tube is one
  // flow call. Returns the endpoint, the unit image tangent and log |Dg^k v| / |v|.
  struct TangentIterate {
    Vec z;
    Vec tangent;
    double log_stretch = 0.0;  // log |Dg^k v| / |v|
  };
  TangentIterate iterate_with_tangent(const Vec& z, const Vec& v, long k) const;
  // Unique preimage in U; GeometryError if there is none or it is ambiguous.
  Vec inverse_step(const Vec& z) const;
  // Unperturbed solenoid map regardless of variant.
  Vec base_map(const Vec& z) const;
  Mat base_jacobian(const Vec& z) const;

  Region region(const Vec& z) const;
  bool in_trapping_region(const Vec& z) const;
  bool in_tube(const Vec& z) const;  // |wrap(theta)| < r1, where g is a flow map
  bool in_z(const Vec& z) const;     // local norm < r1 (g-neutral region)
  double local_norm(const Vec& z) const { return to_local(z).norm(); }

  Vec to_local(const Vec& z) const;
  Vec from_local(const Vec& x) const;
  Vec fixed_point() const;
  Vec canonical(const Vec& z) const;               // theta reduced to [0, 2pi)
  Vec displacement(const Vec& a, const Vec& b) const;  // b - a, theta wrapped
  double distance(const Vec& a, const Vec& b) const { return displacement(a, b).norm(); }

  // Reference directions: e_theta and the cross-section.
  Vec unstable_reference() const;
  Mat stable_reference() const;  // d x (d-1), orthonormal columns

  double offset_value_component(double theta, int i) const;
  Vec offset_curve(double theta) const;        // o(theta)
  Vec offset_derivative(double theta) const;   // o'(theta)
  double blend(double theta) const;            // 1 on the tube, 0 past the blend slab

  // Passage from a point inside Y (local coordinates).
  FlowTrace flow_through_Z(const Vec& x0_local, const Vec& v0,
                           const TraceOptions& opt = {}) const;

  // For z in Z: the first backward iterate outside Z, k >= 1, and D(g^k) there.
  struct BackwardEntry {
    int k = 0;
    Vec entry;
    Mat forward_jacobian;  // D g^k at `entry`
  };
  std::optional<BackwardEntry> backward_entry(const Vec& z, int max_k) const;

  // Number of iterates the orbit of z spends before landing outside Z,
  // i.e. the smallest n >= 1 with g^n(z) outside Z; n_max + 1 if unresolved.
  long first_exit(const Vec& z, long n_max) const;

 private:
  Vec core(double theta) const;
  Vec core_derivative(double theta) const;

  SystemSpec spec_;
  ModelKind kind_;
  MapVariant variant_;
  int dim_;
  PassageFlow flow_;
  Vec ystar_;
};

System build_system(const SystemSpec& spec, ModelKind kind = ModelKind::kSolenoid,
                    MapVariant variant = MapVariant::kSlowed);

}  // namespace ehsrb
