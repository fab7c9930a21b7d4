#pragma once

// Exact angular-momentum machinery for a fixed-J polarization block.
//
// Matrices are indexed by m in descending order: row 0 is |J, J>, the last
// row is |J, -J>. All phases follow the Condon-Shortley convention.

#include <algorithm>
#include <cmath>
#include <complex>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "polartomo/core.hpp"

namespace polartomo {

template <typename Scalar = double>
struct OperatorTriple {
  HalfInt j;
  CMatrix<Scalar> j1, j2, j3;
  CMatrix<Scalar> jplus, jminus;
  RMatrix<Scalar> n_op;  ///< photon number 2J on the block
};

/// Density matrix restricted to one photon-number subspace N = 2J.
template <typename Scalar = double>
struct SpinBlock {
  HalfInt j;
  CMatrix<Scalar> matrix;

  static SpinBlock maximally_mixed(HalfInt j, Scalar weight = Scalar(1)) {
    const int d = block_dim(j);
    return {j, CMatrix<Scalar>::Identity(d, d) * std::complex<Scalar>(weight / Scalar(d))};
  }

  static SpinBlock pure(HalfInt j, const Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>& psi) {
    if (psi.size() != block_dim(j)) throw std::invalid_argument("state vector has wrong dimension");
    const auto v = psi / psi.norm();
    return {j, v * v.adjoint()};
  }

  /// |J, m><J, m|
  static SpinBlock basis_state(HalfInt j, HalfInt m) {
    Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> psi =
        Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>::Zero(block_dim(j));
    psi(m_index(j, m)) = 1;
    return pure(j, psi);
  }

  std::complex<Scalar> trace() const { return matrix.trace(); }

  /// Throws std::invalid_argument unless the block is Hermitian, PSD and (optionally) unit trace.
  void validate(bool require_unit_trace = true) const {
    const int d = block_dim(j);
    if (matrix.rows() != d || matrix.cols() != d) {
      throw std::invalid_argument("block matrix must be (2J+1)x(2J+1)");
    }
    using std::abs;
    if ((matrix - matrix.adjoint()).cwiseAbs().maxCoeff() > Scalar(1e-12)) {
      throw std::invalid_argument("block matrix is not Hermitian");
    }
    if (abs(matrix.trace().imag()) > Scalar(1e-12)) throw std::invalid_argument("trace is not real");
    if (require_unit_trace && abs(matrix.trace().real() - Scalar(1)) > Scalar(1e-12)) {
      throw std::invalid_argument("block trace is not one");
    }
    Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> es(matrix, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < Scalar(-1e-10)) {
      throw std::invalid_argument("block matrix is not positive semidefinite");
    }
  }
};

/// State multipoles rho_Kq, stored K-major with q ascending: index K^2 + K + q.
template <typename Scalar = double>
struct MultipoleSet {
  HalfInt j;
  std::vector<std::complex<Scalar>> coeffs;

  static int index(int K, int q) { return K * K + K + q; }
  static int count(HalfInt j) { return block_dim(j) * block_dim(j); }

  std::complex<Scalar> at(int K, int q) const { return coeffs.at(static_cast<std::size_t>(index(K, q))); }
  std::complex<Scalar>& at(int K, int q) { return coeffs.at(static_cast<std::size_t>(index(K, q))); }
};

/// Outcome distribution of a Stokes measurement along one direction.
template <typename Scalar = double>
struct Tomogram {
  Direction direction;
  RVector<Scalar> probabilities;  ///< indexed like block rows, m = J .. -J
};

// ---------------------------------------------------------------------------

template <typename Scalar = double>
OperatorTriple<Scalar> angular_momentum_matrices(HalfInt j) {
  if (j.twice() < 0) throw std::invalid_argument("spin must be non-negative");
  using C = std::complex<Scalar>;
  const int d = block_dim(j);
  const Scalar jj = Scalar(j.twice()) / 2;

  OperatorTriple<Scalar> ops;
  ops.j = j;
  ops.jplus = CMatrix<Scalar>::Zero(d, d);
  ops.j3 = CMatrix<Scalar>::Zero(d, d);
  for (int i = 0; i < d; ++i) {
    const Scalar m = Scalar(m_at(j, i).twice()) / 2;
    ops.j3(i, i) = m;
    if (i > 0) ops.jplus(i - 1, i) = std::sqrt(jj * (jj + 1) - m * (m + 1));
  }
  ops.jminus = ops.jplus.adjoint();
  ops.j1 = (ops.jplus + ops.jminus) * C(Scalar(0.5), 0);
  ops.j2 = (ops.jplus - ops.jminus) * C(0, Scalar(-0.5));
  ops.n_op = RMatrix<Scalar>::Identity(d, d) * Scalar(j.twice());
  return ops;
}

namespace detail {

/// Clebsch-Gordan coefficients <j1 m1; j2 M-m1 | J M> for every allowed m1.
template <typename Scalar>
struct CgColumn {
  int twice_m1_min = 0;
  RVector<Scalar> values;  ///< values[k] belongs to m1 = m1_min + k

  Scalar at_twice_m1(int twice_m1) const {
    const int k = (twice_m1 - twice_m1_min) / 2;
    if ((twice_m1 - twice_m1_min) % 2 != 0 || k < 0 || k >= values.size()) return Scalar(0);
    return values(k);
  }
};

inline bool triangle_ok(int a2, int b2, int c2) {
  return c2 >= std::abs(a2 - b2) && c2 <= a2 + b2 && (a2 + b2 + c2) % 2 == 0;
}

// The coefficients over m1 form the eigenvector of J^2 (tridiagonal in the
// |m1, M-m1> basis) with eigenvalue J(J+1). The three-term recursion is run
// from both ends toward the middle and the halves are matched, which keeps the
// growing solution dominant in each classically forbidden tail.
template <typename Scalar>
CgColumn<Scalar> cg_column(int tj1, int tj2, int tJ, int tM) {
  CgColumn<Scalar> out;
  const int lo = std::max(-tj1, tM - tj2);
  const int hi = std::min(tj1, tM + tj2);
  out.twice_m1_min = lo;
  if (hi < lo || !triangle_ok(tj1, tj2, tJ) || std::abs(tM) > tJ) {
    out.values.resize(0);
    return out;
  }
  const int n = (hi - lo) / 2 + 1;
  out.values.resize(n);
  if (n == 1) {
    out.values(0) = 1;
    return out;
  }
  const Scalar j1 = Scalar(tj1) / 2, j2 = Scalar(tj2) / 2, J = Scalar(tJ) / 2, M = Scalar(tM) / 2;
  const Scalar lambda = J * (J + 1);
  RVector<Scalar> diag(n), off(n - 1);
  for (int k = 0; k < n; ++k) {
    const Scalar m1 = Scalar(lo + 2 * k) / 2;
    const Scalar m2 = M - m1;
    diag(k) = j1 * (j1 + 1) + j2 * (j2 + 1) + 2 * m1 * m2 - lambda;
    if (k + 1 < n) off(k) = std::sqrt((j1 - m1) * (j1 + m1 + 1)) * std::sqrt((j2 + m2) * (j2 - m2 + 1));
  }

  constexpr Scalar kBig = Scalar(1e120);
  RVector<Scalar>& x = out.values;
  x.setZero();
  // Forward from the low-m1 end while the magnitude keeps growing.
  x(0) = 1;
  x(1) = -diag(0) * x(0) / off(0);
  int mid = 1;
  while (mid + 1 < n && std::abs(x(mid)) >= std::abs(x(mid - 1))) {
    x(mid + 1) = -(diag(mid) * x(mid) + off(mid - 1) * x(mid - 1)) / off(mid);
    ++mid;
    if (std::abs(x(mid)) > kBig) x.head(mid + 1) /= kBig;
  }
  if (mid < n - 1 || std::abs(x(mid)) < std::abs(x(mid - 1))) {
    // Backward from the high-m1 end down to mid - 1, then match on {mid-1, mid}.
    RVector<Scalar> y = RVector<Scalar>::Zero(n);
    y(n - 1) = 1;
    y(n - 2) = -diag(n - 1) * y(n - 1) / off(n - 2);
    for (int k = n - 2; k > std::max(mid - 1, 0); --k) {
      y(k - 1) = -(diag(k) * y(k) + off(k) * y(k + 1)) / off(k - 1);
      if (std::abs(y(k - 1)) > kBig) y.segment(k - 1, n - k + 1) /= kBig;
    }
    const int a = std::max(mid - 1, 0);
    Scalar num = 0, den = 0;
    for (int k = a; k <= mid; ++k) {
      num += x(k) * y(k);
      den += y(k) * y(k);
    }
    const Scalar scale = num / den;
    for (int k = mid + 1; k < n; ++k) x(k) = scale * y(k);
  }
  x /= x.norm();
  if (x(n - 1) < 0) x = -x;
  return out;
}

inline void check_projection(int tj, int tm, const char* what) {
  if (tj < 0 || std::abs(tm) > tj || (tj + tm) % 2 != 0) {
    throw std::invalid_argument(std::string("invalid angular momentum pair for ") + what);
  }
}

}  // namespace detail

/// Clebsch-Gordan coefficient <j1 m1; j2 m2 | J M> (Condon-Shortley phase).
template <typename Scalar = double>
Scalar clebsch_gordan(HalfInt j1, HalfInt m1, HalfInt j2, HalfInt m2, HalfInt J, HalfInt M) {
  detail::check_projection(j1.twice(), m1.twice(), "j1,m1");
  detail::check_projection(j2.twice(), m2.twice(), "j2,m2");
  detail::check_projection(J.twice(), M.twice(), "J,M");
  if (!detail::triangle_ok(j1.twice(), j2.twice(), J.twice())) {
    throw std::invalid_argument("triangle condition violated");
  }
  if (M.twice() != m1.twice() + m2.twice()) return Scalar(0);
  return detail::cg_column<Scalar>(j1.twice(), j2.twice(), J.twice(), M.twice()).at_twice_m1(m1.twice());
}

/// Real rotation matrix d^J(theta) = exp(-i theta J2).
template <typename Scalar = double>
RMatrix<Scalar> wigner_d_matrix(HalfInt j, Scalar theta) {
  if (j.twice() < 0) throw std::invalid_argument("spin must be non-negative");
  const auto ops = angular_momentum_matrices<Scalar>(j);
  // -i J2 = (J- - J+)/2 is real antisymmetric.
  const RMatrix<Scalar> gen = ((ops.jminus - ops.jplus) * std::complex<Scalar>(Scalar(0.5), 0)).real();
  return RMatrix<Scalar>((theta * gen).exp());
}

/// Unitary exp(-i phi J3) exp(-i theta J2): rotates the J3 axis onto the direction.
template <typename Scalar = double>
CMatrix<Scalar> displacement_matrix(HalfInt j, const Direction& dir) {
  const RMatrix<Scalar> d = wigner_d_matrix<Scalar>(j, Scalar(dir.theta));
  CMatrix<Scalar> out = d.template cast<std::complex<Scalar>>();
  for (int i = 0; i < d.rows(); ++i) {
    const Scalar m = Scalar(m_at(j, i).twice()) / 2;
    out.row(i) *= std::polar(Scalar(1), -m * Scalar(dir.phi));
  }
  return out;
}

namespace detail {

inline void check_tensor_indices(HalfInt j, int K, int q) {
  if (j.twice() < 0) throw std::invalid_argument("spin must be non-negative");
  if (K < 0 || K > j.twice() || std::abs(q) > K) {
    throw std::invalid_argument("tensor indices out of range: K=" + std::to_string(K) + " q=" + std::to_string(q));
  }
}

/// Calls f(K, q, row, col, value) for every nonzero entry of every T_Kq of the block.
template <typename Scalar, typename F>
void for_each_tensor_entry(HalfInt j, F&& f) {
  const int d = block_dim(j);
  const int tj = j.twice();
  const Scalar norm_j = Scalar(d);
  for (int K = 0; K <= tj; ++K) {
    const Scalar pref = std::sqrt(Scalar(2 * K + 1) / norm_j);
    for (int row = 0; row < d; ++row) {
      const int tMp = tj - 2 * row;  // m'
      const auto col = cg_column<Scalar>(tj, 2 * K, tj, tMp);
      for (int k = 0; k < col.values.size(); ++k) {
        const int tm = col.twice_m1_min + 2 * k;  // m
        const int q = (tMp - tm) / 2;
        f(K, q, row, (tj - tm) / 2, pref * col.values(k));
      }
    }
  }
}

}  // namespace detail

/// Irreducible tensor operator T_Kq on the spin-J block (real entries).
template <typename Scalar = double>
CMatrix<Scalar> tensor_operator(HalfInt j, int K, int q) {
  detail::check_tensor_indices(j, K, q);
  const int d = block_dim(j);
  const int tj = j.twice();
  CMatrix<Scalar> T = CMatrix<Scalar>::Zero(d, d);
  const Scalar pref = std::sqrt(Scalar(2 * K + 1) / Scalar(d));
  for (int row = 0; row < d; ++row) {
    const int tMp = tj - 2 * row;
    const int tm = tMp - 2 * q;
    if (std::abs(tm) > tj) continue;
    const auto col = detail::cg_column<Scalar>(tj, 2 * K, tj, tMp);
    T(row, (tj - tm) / 2) = pref * col.at_twice_m1(tm);
  }
  return T;
}

/// rho_Kq = Tr(rho T_Kq^dagger).
template <typename Scalar = double>
MultipoleSet<Scalar> multipoles(const SpinBlock<Scalar>& block) {
  if (block.matrix.rows() != block_dim(block.j) || block.matrix.cols() != block_dim(block.j)) {
    throw std::invalid_argument("block matrix must be (2J+1)x(2J+1)");
  }
  MultipoleSet<Scalar> ms{block.j, std::vector<std::complex<Scalar>>(MultipoleSet<Scalar>::count(block.j))};
  detail::for_each_tensor_entry<Scalar>(block.j, [&](int K, int q, int r, int c, Scalar v) {
    ms.at(K, q) += block.matrix(r, c) * v;  // T is real
  });
  return ms;
}

/// rho = sum_Kq rho_Kq T_Kq.
template <typename Scalar = double>
SpinBlock<Scalar> block_from_multipoles(const MultipoleSet<Scalar>& ms) {
  if (ms.j.twice() < 0 || static_cast<int>(ms.coeffs.size()) != MultipoleSet<Scalar>::count(ms.j)) {
    throw std::invalid_argument("multipole count does not match (2J+1)^2 for J=" + ms.j.str());
  }
  const int d = block_dim(ms.j);
  SpinBlock<Scalar> out{ms.j, CMatrix<Scalar>::Zero(d, d)};
  detail::for_each_tensor_entry<Scalar>(ms.j, [&](int K, int q, int r, int c, Scalar v) {
    out.matrix(r, c) += ms.at(K, q) * v;
  });
  return out;
}

/// Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2.
template <typename Scalar = double>
Scalar fidelity(const CMatrix<Scalar>& a, const CMatrix<Scalar>& b) {
  Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> ea(a);
  RVector<Scalar> sq = ea.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt();
  const CMatrix<Scalar> root = ea.eigenvectors() * sq.template cast<std::complex<Scalar>>().asDiagonal() *
                               ea.eigenvectors().adjoint();
  CMatrix<Scalar> inner = root * b * root;
  inner = (inner + inner.adjoint()) * std::complex<Scalar>(Scalar(0.5), 0);
  Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> ei(inner, Eigen::EigenvaluesOnly);
  const Scalar s = ei.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt().sum();
  return s * s;
}

template <typename Scalar = double>
Scalar trace_distance(const CMatrix<Scalar>& a, const CMatrix<Scalar>& b) {
  CMatrix<Scalar> diff = a - b;
  diff = (diff + diff.adjoint()) * std::complex<Scalar>(Scalar(0.5), 0);
  Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> es(diff, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum() / 2;
}

/// Least-squares inversion of fixed-J tomograms for every multipole.
///
/// Unknowns are the (2J+1)^2 real parameters of a Hermitian block. Generic
/// direction sets need at least 4J+1 directions for full rank. The solution is
/// Hermitized, eigenvalues below -1e-10 are clipped, and the trace set to one.
template <typename Scalar = double>
SpinBlock<Scalar> reconstruct_spin_block(std::span<const Tomogram<Scalar>> tomograms, HalfInt j) {
  using C = std::complex<Scalar>;
  if (j.twice() < 0) throw std::invalid_argument("spin must be non-negative");
  const int d = block_dim(j);
  const int n_unknown = d * d;
  for (const auto& t : tomograms) {
    if (t.probabilities.size() != d) throw std::invalid_argument("tomogram length must be 2J+1");
  }

  // Column layout: for each K, q = 0 (real), then (Re, Im) for q = 1..K.
  struct Column {
    int K, q;
    bool imag;
  };
  std::vector<Column> columns;
  std::vector<CMatrix<Scalar>> generators;
  for (int K = 0; K <= j.twice(); ++K) {
    const CMatrix<Scalar> T0 = tensor_operator<Scalar>(j, K, 0);
    columns.push_back({K, 0, false});
    generators.push_back(T0);
    for (int q = 1; q <= K; ++q) {
      const CMatrix<Scalar> T = tensor_operator<Scalar>(j, K, q);
      columns.push_back({K, q, false});
      generators.push_back(T + T.adjoint());
      columns.push_back({K, q, true});
      generators.push_back((T - T.adjoint()) * C(0, 1));
    }
  }

  const int n_rows = static_cast<int>(tomograms.size()) * d;
  RMatrix<Scalar> design(n_rows, n_unknown);
  RVector<Scalar> rhs(n_rows);
  for (std::size_t t = 0; t < tomograms.size(); ++t) {
    const CMatrix<Scalar> D = displacement_matrix<Scalar>(j, tomograms[t].direction);
    for (int c = 0; c < n_unknown; ++c) {
      const CMatrix<Scalar> rotated = D.adjoint() * generators[static_cast<std::size_t>(c)] * D;
      design.block(static_cast<int>(t) * d, c, d, 1) = rotated.diagonal().real();
    }
    rhs.segment(static_cast<int>(t) * d, d) = tomograms[t].probabilities;
  }

  Eigen::JacobiSVD<RMatrix<Scalar>> svd(design, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const Scalar tol = Scalar(1e-10) * std::max(sv.size() > 0 ? sv(0) : Scalar(0), Scalar(1e-300));
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) rank += sv(i) > tol ? 1 : 0;
  if (rank < n_unknown) {
    std::vector<bool> missing(static_cast<std::size_t>(j.twice() + 1), false);
    for (int v = rank; v < n_unknown; ++v) {
      const auto col = svd.matrixV().col(v);
      for (int c = 0; c < n_unknown; ++c) {
        if (std::abs(col(c)) > Scalar(0.1)) missing[static_cast<std::size_t>(columns[static_cast<std::size_t>(c)].K)] = true;
      }
    }
    std::vector<std::string> names;
    std::ostringstream msg;
    msg << "tomogram design has rank " << rank << " < " << n_unknown << "; undetermined multipole orders:";
    for (std::size_t K = 0; K < missing.size(); ++K) {
      if (missing[K]) {
        names.push_back("K=" + std::to_string(K));
        msg << " K=" << K;
      }
    }
    throw Underdetermined(msg.str(), names);
  }
  svd.setThreshold(tol / std::max(sv(0), Scalar(1e-300)));
  const RVector<Scalar> sol = svd.solve(rhs);

  MultipoleSet<Scalar> ms{j, std::vector<C>(static_cast<std::size_t>(n_unknown))};
  for (std::size_t c = 0; c < columns.size(); ++c) {
    const auto& col = columns[c];
    if (col.q == 0) {
      ms.at(col.K, 0) = sol(static_cast<int>(c));
    } else if (!col.imag) {
      ms.at(col.K, col.q).real(sol(static_cast<int>(c)));
    } else {
      ms.at(col.K, col.q).imag(sol(static_cast<int>(c)));
    }
  }
  for (int K = 1; K <= j.twice(); ++K) {
    for (int q = 1; q <= K; ++q) {
      ms.at(K, -q) = (q % 2 == 0 ? Scalar(1) : Scalar(-1)) * std::conj(ms.at(K, q));
    }
  }

  SpinBlock<Scalar> block = block_from_multipoles(ms);
  block.matrix = (block.matrix + block.matrix.adjoint()) * C(Scalar(0.5), 0);
  Eigen::SelfAdjointEigenSolver<CMatrix<Scalar>> es(block.matrix);
  RVector<Scalar> ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) < Scalar(-1e-10)) ev(i) = 0;
  }
  block.matrix = es.eigenvectors() * ev.template cast<C>().asDiagonal() * es.eigenvectors().adjoint();
  const Scalar tr = block.matrix.trace().real();
  if (!(tr > 0)) throw std::runtime_error("reconstructed block has non-positive trace");
  block.matrix /= C(tr, 0);
  return block;
}

}  // namespace polartomo
