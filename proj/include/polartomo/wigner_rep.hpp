#pragma once

#include <cmath>
#include <complex>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "polartomo/core.hpp"
#include "polartomo/spin_algebra.hpp"

namespace polartomo {

/// All Y_Kq(direction) for K <= k_max, indexed K^2 + K + q (Condon-Shortley phase).
template <typename Scalar = double>
std::vector<std::complex<Scalar>> spherical_harmonics_upto(int k_max, const Direction& dir) {
  if (k_max < 0) throw std::invalid_argument("negative harmonic degree");
  const Scalar x = std::cos(Scalar(dir.theta));
  const Scalar s = std::sin(Scalar(dir.theta));
  const int n = k_max + 1;
  // Fully normalized associated Legendre values P(l, m), m >= 0.
  std::vector<Scalar> P(static_cast<std::size_t>(n * n), Scalar(0));
  auto at = [&](int l, int m) -> Scalar& { return P[static_cast<std::size_t>(l * n + m)]; };
  at(0, 0) = Scalar(1) / std::sqrt(Scalar(4) * Scalar(kPi));
  for (int m = 1; m <= k_max; ++m) at(m, m) = -std::sqrt(Scalar(2 * m + 1) / Scalar(2 * m)) * s * at(m - 1, m - 1);
  for (int m = 0; m < k_max; ++m) at(m + 1, m) = std::sqrt(Scalar(2 * m + 3)) * x * at(m, m);
  for (int m = 0; m <= k_max; ++m) {
    for (int l = m + 2; l <= k_max; ++l) {
      const Scalar a = std::sqrt(Scalar(4 * l * l - 1) / Scalar(l * l - m * m));
      const Scalar b = std::sqrt(Scalar((l - 1) * (l - 1) - m * m) / Scalar(4 * (l - 1) * (l - 1) - 1));
      at(l, m) = a * (x * at(l - 1, m) - b * at(l - 2, m));
    }
  }
  std::vector<std::complex<Scalar>> out(static_cast<std::size_t>(n * n));
  for (int l = 0; l <= k_max; ++l) {
    for (int m = 0; m <= l; ++m) {
      const auto y = at(l, m) * std::polar(Scalar(1), Scalar(m) * Scalar(dir.phi));
      out[static_cast<std::size_t>(l * l + l + m)] = y;
      if (m > 0) out[static_cast<std::size_t>(l * l + l - m)] = (m % 2 == 0 ? Scalar(1) : Scalar(-1)) * std::conj(y);
    }
  }
  return out;
}

template <typename Scalar = double>
std::complex<Scalar> spherical_harmonic(int K, int q, const Direction& dir) {
  if (K < 0 || std::abs(q) > K) throw std::invalid_argument("spherical harmonic indices out of range");
  return spherical_harmonics_upto<Scalar>(K, dir)[static_cast<std::size_t>(K * K + K + q)];
}

/// Delta(n) = sqrt(4 pi / (2J+1)) sum_Kq Y*_Kq(n) T_Kq.
template <typename Scalar = double>
CMatrix<Scalar> wigner_kernel(HalfInt j, const Direction& dir) {
  if (j.twice() < 0) throw std::invalid_argument("spin must be non-negative");
  const int d = block_dim(j);
  const auto Y = spherical_harmonics_upto<Scalar>(j.twice(), dir);
  const Scalar pref = std::sqrt(Scalar(4) * Scalar(kPi) / Scalar(d));
  CMatrix<Scalar> out = CMatrix<Scalar>::Zero(d, d);
  detail::for_each_tensor_entry<Scalar>(j, [&](int K, int q, int r, int c, Scalar v) {
    out(r, c) += pref * v * std::conj(Y[static_cast<std::size_t>(K * K + K + q)]);
  });
  return out;
}

/// W(n) = Tr[rho Delta(n)] evaluated through the multipole sum.
template <typename Scalar = double>
Scalar wigner_function(const MultipoleSet<Scalar>& ms, const Direction& dir) {
  const auto Y = spherical_harmonics_upto<Scalar>(ms.j.twice(), dir);
  std::complex<Scalar> acc = 0;
  for (std::size_t i = 0; i < Y.size(); ++i) acc += ms.coeffs[i] * Y[i];
  return std::sqrt(Scalar(4) * Scalar(kPi) / Scalar(block_dim(ms.j))) * acc.real();
}

template <typename Scalar = double>
Scalar wigner_function(const SpinBlock<Scalar>& block, const Direction& dir) {
  return wigner_function(multipoles(block), dir);
}

/// Same quantity through an explicit kernel trace.
template <typename Scalar = double>
std::complex<Scalar> wigner_function_kernel(const SpinBlock<Scalar>& block, const Direction& dir) {
  return (block.matrix * wigner_kernel<Scalar>(block.j, dir)).trace();
}

/// sum_J (2J+1)/(4 pi) W^(J)(n) over blocks with distinct J.
template <typename Scalar = double>
Scalar wigner_marginal(std::span<const SpinBlock<Scalar>> blocks, const Direction& dir) {
  std::set<int> seen;
  Scalar total = 0;
  for (const auto& b : blocks) {
    if (!seen.insert(b.j.twice()).second) throw std::invalid_argument("duplicate J=" + b.j.str() + " in marginal");
    total += Scalar(block_dim(b.j)) / (Scalar(4) * Scalar(kPi)) * wigner_function(b, dir);
  }
  return total;
}

/// e^{i pi J} exp(-i pi n.J): unitary displaced parity about n.
template <typename Scalar = double>
CMatrix<Scalar> rotated_parity(HalfInt j, const Direction& dir) {
  using C = std::complex<Scalar>;
  const auto ops = angular_momentum_matrices<Scalar>(j);
  const Vec3 n = dir.unit();
  const CMatrix<Scalar> nj = ops.j1 * C(Scalar(n.x()), 0) + ops.j2 * C(Scalar(n.y()), 0) + ops.j3 * C(Scalar(n.z()), 0);
  Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> es(nj);
  const Scalar jv = Scalar(j.twice()) / 2;
  Eigen::Matrix<C, Eigen::Dynamic, 1> phases(es.eigenvalues().size());
  for (int i = 0; i < phases.size(); ++i) {
    // eigenvalues are m; round to the exact ladder before exponentiating
    const Scalar m = std::round(Scalar(2) * es.eigenvalues()(i)) / 2;
    phases(i) = std::polar(Scalar(1), Scalar(kPi) * (jv - m));
  }
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

/// Large-J kernel, 2 e^{i pi J} exp(-i pi n.J).
template <typename Scalar = double>
CMatrix<Scalar> wigner_kernel_approx(HalfInt j, const Direction& dir) {
  return rotated_parity<Scalar>(j, dir) * std::complex<Scalar>(2, 0);
}

namespace detail {

inline std::pair<Vec3, Vec3> tangent_basis(const Direction& mean) {
  const double ct = std::cos(mean.theta), st = std::sin(mean.theta);
  const double cp = std::cos(mean.phi), sp = std::sin(mean.phi);
  return {Vec3(ct * cp, ct * sp, -st), Vec3(-sp, cp, 0.0)};
}

}  // namespace detail

/// Gnomonic projection onto the plane tangent at mean_direction, scaled by J.
inline std::pair<double, double> tangent_plane_coordinates(double j, const Direction& dir, const Direction& mean) {
  const Vec3 n = dir.unit();
  const Vec3 n0 = mean.unit();
  const double c = n.dot(n0);
  if (c <= 1e-12) throw DomainError("direction is not within pi/2 of the tangent point");
  const auto [e1, e2] = detail::tangent_basis(mean);
  return {j * n.dot(e1) / c, j * n.dot(e2) / c};
}

inline Direction from_tangent_plane(double j, double q, double p, const Direction& mean) {
  if (!(j > 0.0)) throw std::invalid_argument("tangent-plane radius must be positive");
  const auto [e1, e2] = detail::tangent_basis(mean);
  return Direction::from_vector(mean.unit() + (q / j) * e1 + (p / j) * e2);
}

}  // namespace polartomo
