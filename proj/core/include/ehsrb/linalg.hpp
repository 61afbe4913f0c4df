#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

namespace ehsrb {

// Runtime dimension 2 or 3 with inline storage, so no heap traffic per step.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Angle wrapped into (-pi, pi].
inline double wrap_angle(double a) {
  double w = std::remainder(a, kTwoPi);
  if (w <= -kPi) w += kTwoPi;
  return w;
}

// Angle reduced into [0, 2pi).
inline double unit_angle(double a) {
  double w = std::fmod(a, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  if (w >= kTwoPi) w = 0.0;
  return w;
}

// Angle between the lines spanned by u and w, in [0, pi/2].
inline double line_angle(const Vec& u, const Vec& w) {
  double c = std::abs(u.dot(w)) / (u.norm() * w.norm());
  if (c >= 1.0) return 0.0;
  return std::acos(c);
}

inline Vec make_vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace ehsrb
