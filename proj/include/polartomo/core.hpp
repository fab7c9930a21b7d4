#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <complex>
#include <iterator>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace polartomo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

template <typename Scalar>
using CMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Error types. Argument validation uses std::invalid_argument directly.

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A linear inversion whose design does not determine every unknown.
class Underdetermined : public std::runtime_error {
 public:
  Underdetermined(const std::string& what, std::vector<std::string> missing)
      : std::runtime_error(what), missing_(std::move(missing)) {}
  const std::vector<std::string>& missing() const { return missing_; }

 private:
  std::vector<std::string> missing_;
};

class DegenerateDistribution : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Direction set that leaves projection planes without enough angles.
class CoverageGap : public std::runtime_error {
 public:
  CoverageGap(const std::string& what, std::vector<std::string> planes)
      : std::runtime_error(what), planes_(std::move(planes)) {}
  const std::vector<std::string>& planes() const { return planes_; }

 private:
  std::vector<std::string> planes_;
};

class NonConvergence : public std::runtime_error {
 public:
  NonConvergence(const std::string& what, double gradient_norm)
      : std::runtime_error(what), gradient_norm_(gradient_norm) {}
  double gradient_norm() const { return gradient_norm_; }

 private:
  double gradient_norm_;
};

// ---------------------------------------------------------------------------

/// Half-integer quantum number stored as twice its value.
class HalfInt {
 public:
  constexpr HalfInt() = default;

  static constexpr HalfInt from_twice(int twice) { return HalfInt(twice); }

  static HalfInt from_double(double value) {
    const double twice = 2.0 * value;
    const double rounded = std::round(twice);
    if (!std::isfinite(value) || std::abs(twice - rounded) > 1e-9) {
      throw std::invalid_argument("value is not a half-integer: " + std::to_string(value));
    }
    return HalfInt(static_cast<int>(rounded));
  }

  constexpr int twice() const { return twice_; }
  constexpr double value() const { return 0.5 * twice_; }
  constexpr bool is_integer() const { return twice_ % 2 == 0; }

  constexpr HalfInt operator-() const { return HalfInt(-twice_); }
  constexpr HalfInt operator+(HalfInt o) const { return HalfInt(twice_ + o.twice_); }
  constexpr HalfInt operator-(HalfInt o) const { return HalfInt(twice_ - o.twice_); }
  constexpr auto operator<=>(const HalfInt&) const = default;

  std::string str() const {
    return is_integer() ? std::to_string(twice_ / 2) : std::to_string(twice_) + "/2";
  }

 private:
  constexpr explicit HalfInt(int twice) : twice_(twice) {}
  int twice_ = 0;
};

/// Spin label J >= 0 of a (2J+1)-dimensional block.
inline HalfInt spin(double j) {
  const HalfInt s = HalfInt::from_double(j);
  if (s.twice() < 0) throw std::invalid_argument("spin must be non-negative");
  return s;
}

inline int block_dim(HalfInt j) { return j.twice() + 1; }

/// Row/column index of |J,m> in a block; rows run from m = J down to m = -J.
inline int m_index(HalfInt j, HalfInt m) { return (j.twice() - m.twice()) / 2; }
inline HalfInt m_at(HalfInt j, int index) { return HalfInt::from_twice(j.twice() - 2 * index); }

// ---------------------------------------------------------------------------

/// Point on the unit (Poincare) sphere.
struct Direction {
  double theta = 0.0;  ///< polar angle in [0, pi]
  double phi = 0.0;    ///< azimuth in [0, 2 pi)

  Vec3 unit() const {
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
  }

  /// Reduces arbitrary (theta, phi) to the canonical ranges without moving the point.
  static Direction canonical(double theta, double phi) {
    theta = std::remainder(theta, 2.0 * kPi);
    if (theta < 0.0) {
      theta = -theta;
      phi += kPi;
    }
    phi = std::fmod(phi, 2.0 * kPi);
    if (phi < 0.0) phi += 2.0 * kPi;
    if (phi >= 2.0 * kPi) phi = 0.0;
    return {theta, phi};
  }

  static Direction from_vector(const Vec3& v) {
    const double r = v.norm();
    if (!(r > 0.0)) throw std::invalid_argument("zero vector has no direction");
    const double theta = std::acos(std::clamp(v.z() / r, -1.0, 1.0));
    double phi = std::atan2(v.y(), v.x());
    if (phi < 0.0) phi += 2.0 * kPi;
    if (phi >= 2.0 * kPi) phi = 0.0;
    return {theta, phi};
  }
};

/// Stokes axes of Poincare space.
enum class Axis { J1 = 0, J2 = 1, J3 = 2 };

inline int axis_index(Axis a) { return static_cast<int>(a); }

inline Axis axis_from_string(const std::string& s) {
  if (s == "J1" || s == "1" || s == "x") return Axis::J1;
  if (s == "J2" || s == "2" || s == "y") return Axis::J2;
  if (s == "J3" || s == "3" || s == "z") return Axis::J3;
  throw std::invalid_argument("unknown Stokes axis '" + s + "'");
}

inline std::string axis_name(Axis a) { return "J" + std::to_string(axis_index(a) + 1); }

/// Sum with a fixed pairwise reduction tree; the result depends only on the input order.
template <typename Range>
double pairwise_sum(const Range& values) {
  const auto n = static_cast<std::ptrdiff_t>(std::size(values));
  auto first = std::begin(values);
  auto rec = [&](auto&& self, std::ptrdiff_t lo, std::ptrdiff_t hi) -> double {
    if (hi - lo <= 8) {
      double s = 0.0;
      for (std::ptrdiff_t i = lo; i < hi; ++i) s += static_cast<double>(*(first + i));
      return s;
    }
    const std::ptrdiff_t mid = lo + (hi - lo) / 2;
    return self(self, lo, mid) + self(self, mid, hi);
  };
  return rec(rec, 0, n);
}

}  // namespace polartomo
