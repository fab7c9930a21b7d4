#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "polartomo/forward_model.hpp"
#include "polartomo/spin_algebra.hpp"

using namespace polartomo;
using C = std::complex<double>;

namespace {

long double fact(int n) {
  long double r = 1;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

// Racah's closed form, all arguments doubled.
double racah_cg(int j1, int m1, int j2, int m2, int J, int M) {
  if (m1 + m2 != M) return 0.0;
  auto f = [](int twice) { return fact(twice / 2); };
  const long double pre = std::sqrt((J + 1) * f(J + j1 - j2) * f(J - j1 + j2) * f(j1 + j2 - J) / f(j1 + j2 + J + 2)) *
                          std::sqrt(f(J + M) * f(J - M) * f(j1 - m1) * f(j1 + m1) * f(j2 - m2) * f(j2 + m2));
  long double sum = 0;
  for (int k = 0; k <= 200; k += 2) {
    const int a[] = {j1 + j2 - J - k, j1 - m1 - k, j2 + m2 - k, J - j2 + m1 + k, J - j1 - m2 + k};
    bool ok = true;
    for (int x : a) ok = ok && x >= 0;
    if (!ok) continue;
    long double den = f(k);
    for (int x : a) den *= f(x);
    sum += ((k / 2) % 2 ? -1.0L : 1.0L) / den;
  }
  return static_cast<double>(pre * sum);
}

HalfInt h(int twice) { return HalfInt::from_twice(twice); }

CMatrix<double> random_hermitian(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix<double> a(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) a(r, c) = C(g(rng), g(rng));
  return a + a.adjoint();
}

CMatrix<double> random_state(int d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  CMatrix<double> a(d, d);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) a(r, c) = C(g(rng), g(rng));
  CMatrix<double> rho = a * a.adjoint();
  return rho / rho.trace();
}

}  // namespace

TEST_CASE("angular momentum matrices") {
  const auto half = angular_momentum_matrices(spin(0.5));
  CHECK(std::abs(half.j3(0, 0) - 0.5) < 1e-15);
  CHECK(std::abs(half.j3(1, 1) + 0.5) < 1e-15);
  const auto one = angular_momentum_matrices(spin(1));
  CHECK(std::abs(one.jplus(m_index(spin(1), spin(1)), m_index(spin(1), spin(0))) - std::sqrt(2.0)) < 1e-15);

  for (int tj = 0; tj <= 20; ++tj) {
    const auto ops = angular_momentum_matrices(h(tj));
    const int d = tj + 1;
    const double jj = tj / 2.0;
    const C i(0, 1);
    CHECK((ops.j1 * ops.j2 - ops.j2 * ops.j1 - i * ops.j3).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ops.j2 * ops.j3 - ops.j3 * ops.j2 - i * ops.j1).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ops.j3 * ops.j1 - ops.j1 * ops.j3 - i * ops.j2).cwiseAbs().maxCoeff() < 1e-12);
    const CMatrix<double> cas = ops.j1 * ops.j1 + ops.j2 * ops.j2 + ops.j3 * ops.j3;
    CHECK((cas - CMatrix<double>::Identity(d, d) * jj * (jj + 1)).cwiseAbs().maxCoeff() < 1e-12);
  }
  const auto two = angular_momentum_matrices(spin(2));
  CHECK((two.j1 * two.j1 + two.j2 * two.j2 + two.j3 * two.j3 - 6.0 * CMatrix<double>::Identity(5, 5))
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  CHECK_THROWS_AS(spin(-1), std::invalid_argument);
  CHECK_THROWS_AS(spin(0.3), std::invalid_argument);
}

TEST_CASE("clebsch-gordan against Racah formula") {
  CHECK(clebsch_gordan(spin(2), spin(1), spin(0), spin(0), spin(2), spin(1)) == doctest::Approx(1.0));
  CHECK(clebsch_gordan(spin(0.5), spin(0.5), spin(0.5), spin(0.5), spin(1), spin(1)) == doctest::Approx(1.0));
  CHECK(clebsch_gordan(spin(0.5), spin(0.5), spin(0.5), h(-1), spin(1), spin(0)) ==
        doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(clebsch_gordan(spin(1), spin(1), spin(1), spin(0), spin(2), spin(0)) == 0.0);

  double worst = 0;
  for (int j1 = 0; j1 <= 10; ++j1)
    for (int j2 = 0; j2 <= 10; ++j2)
      for (int J = std::abs(j1 - j2); J <= j1 + j2; J += 2)
        for (int M = -J; M <= J; M += 2)
          for (int m1 = -j1; m1 <= j1; m1 += 2) {
            const int m2 = M - m1;
            if (std::abs(m2) > j2) continue;
            const double got = clebsch_gordan(h(j1), h(m1), h(j2), h(m2), h(J), h(M));
            worst = std::max(worst, std::abs(got - racah_cg(j1, m1, j2, m2, J, M)));
          }
  CHECK(worst < 1e-12);

  CHECK_THROWS_AS(clebsch_gordan(spin(1), spin(1), spin(1), spin(0), spin(3), spin(1)), std::invalid_argument);
  CHECK_THROWS_AS(clebsch_gordan(spin(1), spin(2), spin(1), spin(0), spin(1), spin(2)), std::invalid_argument);
}

TEST_CASE("clebsch-gordan orthogonality and large spins") {
  for (int j1 = 0; j1 <= 8; ++j1)
    for (int j2 = 0; j2 <= 8; ++j2)
      for (int J = std::abs(j1 - j2); J <= j1 + j2; J += 2)
        for (int Jp = std::abs(j1 - j2); Jp <= j1 + j2; Jp += 2)
          for (int M = -std::min(J, Jp); M <= std::min(J, Jp); M += 2) {
            double s = 0;
            for (int m1 = -j1; m1 <= j1; m1 += 2) {
              const int m2 = M - m1;
              if (std::abs(m2) > j2) continue;
              s += clebsch_gordan(h(j1), h(m1), h(j2), h(m2), h(J), h(M)) *
                   clebsch_gordan(h(j1), h(m1), h(j2), h(m2), h(Jp), h(M));
            }
            CHECK(std::abs(s - (J == Jp ? 1.0 : 0.0)) < 1e-10);
          }

  // J = 50 stays finite and normalized
  const auto col = detail::cg_column<double>(100, 100, 100, 0);
  CHECK(col.values.allFinite());
  CHECK(std::abs(col.values.norm() - 1.0) < 1e-12);
}

TEST_CASE("wigner d matrix") {
  for (double th : {0.0, 0.3, 1.1, 2.9}) {
    const auto d = wigner_d_matrix(spin(0.5), th);
    CHECK(d(0, 0) == doctest::Approx(std::cos(th / 2)));
    CHECK(d(1, 0) == doctest::Approx(std::sin(th / 2)));
    const auto d1 = wigner_d_matrix(spin(1), th);
    CHECK(d1(0, 0) == doctest::Approx((1 + std::cos(th)) / 2));
    CHECK(d1(1, 0) == doctest::Approx(std::sin(th) / std::sqrt(2.0)));
    CHECK(d1(2, 0) == doctest::Approx((1 - std::cos(th)) / 2));
  }
  CHECK(wigner_d_matrix(spin(1), kPi / 2)(0, 0) == doctest::Approx(0.5));
  CHECK(wigner_d_matrix(spin(3.5), 0.0).isIdentity(1e-15));
  const auto d = wigner_d_matrix(spin(4), 0.77);
  CHECK((d * d.transpose()).isIdentity(1e-12));
}

TEST_CASE("displacement matrix") {
  CHECK(displacement_matrix(spin(2), Direction{0, 0}).isIdentity(1e-15));
  const double phi = 0.9;
  const auto D = displacement_matrix(spin(1.5), Direction{0, phi});
  for (int i = 0; i < 4; ++i) {
    const double m = m_at(spin(1.5), i).value();
    CHECK(std::abs(D(i, i) - std::polar(1.0, -m * phi)) < 1e-14);
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 20; ++t) {
    const Direction dir{kPi * u(rng), 2 * kPi * u(rng)};
    const auto Dr = displacement_matrix(HalfInt::from_twice(t % 9), dir);
    CHECK((Dr * Dr.adjoint()).isIdentity(1e-12));
    // D rotates the J3 axis onto n: D J3 D^dagger = n.J
    const auto ops = angular_momentum_matrices(HalfInt::from_twice(t % 9));
    const Vec3 n = dir.unit();
    const CMatrix<double> nj = n.x() * ops.j1 + n.y() * ops.j2 + n.z() * ops.j3;
    CHECK((Dr * ops.j3 * Dr.adjoint() - nj).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("tensor operators") {
  for (int tj = 0; tj <= 10; ++tj) {
    const HalfInt j = h(tj);
    const int d = tj + 1;
    CHECK((tensor_operator(j, 0, 0) - CMatrix<double>::Identity(d, d) / std::sqrt(double(d))).cwiseAbs().maxCoeff() <
          1e-14);
    if (tj > 0) {
      const double jj = tj / 2.0;
      const auto ops = angular_momentum_matrices(j);
      CHECK((tensor_operator(j, 1, 0) - std::sqrt(3.0 / ((2 * jj + 1) * (jj + 1) * jj)) * ops.j3)
                .cwiseAbs()
                .maxCoeff() < 1e-13);
    }
    std::vector<CMatrix<double>> ts;
    for (int K = 0; K <= tj; ++K)
      for (int q = -K; q <= K; ++q) ts.push_back(tensor_operator(j, K, q));
    double worst = 0;
    for (std::size_t a = 0; a < ts.size(); ++a)
      for (std::size_t b = 0; b < ts.size(); ++b)
        worst = std::max(worst, std::abs((ts[a] * ts[b].adjoint()).trace() - (a == b ? 1.0 : 0.0)));
    CHECK(worst < 1e-12);
  }
  CHECK_THROWS_AS(tensor_operator(spin(1), 3, 0), std::invalid_argument);
  CHECK_THROWS_AS(tensor_operator(spin(1), 1, 2), std::invalid_argument);
}

TEST_CASE("multipoles") {
  const auto mixed = multipoles(SpinBlock<double>::maximally_mixed(spin(1.5)));
  CHECK(std::abs(mixed.at(0, 0) - 0.5) < 1e-14);
  for (std::size_t i = 1; i < mixed.coeffs.size(); ++i) CHECK(std::abs(mixed.coeffs[i]) < 1e-14);

  const auto up = multipoles(SpinBlock<double>::basis_state(spin(0.5), spin(0.5)));
  CHECK(std::abs(up.at(0, 0) - 1 / std::sqrt(2.0)) < 1e-14);
  CHECK(std::abs(up.at(1, 0) - 1 / std::sqrt(2.0)) < 1e-14);
  CHECK(std::abs(up.at(1, 1)) < 1e-14);

  std::mt19937_64 rng(11);
  for (int tj = 0; tj <= 10; ++tj) {
    const SpinBlock<double> b{h(tj), random_hermitian(tj + 1, rng)};
    const auto ms = multipoles(b);
    CHECK(std::abs(ms.at(0, 0) - b.matrix.trace() / std::sqrt(double(tj + 1))) < 1e-12);
    for (int K = 0; K <= tj; ++K)
      for (int q = 0; q <= K; ++q)
        CHECK(std::abs(ms.at(K, -q) - (q % 2 ? -1.0 : 1.0) * std::conj(ms.at(K, q))) < 1e-12);
    CHECK((block_from_multipoles(ms).matrix - b.matrix).cwiseAbs().maxCoeff() < 1e-12);
  }
  MultipoleSet<double> bad{spin(1), std::vector<C>(5)};
  CHECK_THROWS_AS(block_from_multipoles(bad), std::invalid_argument);
}

TEST_CASE("spin block reconstruction") {
  const auto dirs = direction_grid(3, 3, false);
  std::vector<Tomogram<double>> toms;
  const auto target = SpinBlock<double>::basis_state(spin(1), spin(1));
  for (const auto& d : dirs) toms.push_back({d, exact_tomogram(target, d)});
  const auto rec = reconstruct_spin_block<double>(toms, spin(1));
  CHECK(fidelity(rec.matrix, target.matrix) >= 1 - 1e-8);

  const auto mixed = SpinBlock<double>::maximally_mixed(spin(1.5));
  std::vector<Tomogram<double>> mt;
  for (const auto& d : direction_grid(4, 5, false)) {
    const auto w = exact_tomogram(mixed, d);
    CHECK((w.array() - 0.25).abs().maxCoeff() < 1e-14);
    mt.push_back({d, w});
  }
  CHECK((reconstruct_spin_block<double>(mt, spin(1.5)).matrix - mixed.matrix).cwiseAbs().maxCoeff() < 1e-10);

  std::vector<Tomogram<double>> single{{Direction{0.4, 0.2}, exact_tomogram(target, Direction{0.4, 0.2})}};
  CHECK_THROWS_AS(reconstruct_spin_block<double>(single, spin(1)), Underdetermined);

  std::mt19937_64 rng(3);
  for (int tj = 0; tj <= 4; ++tj) {
    for (int rep = 0; rep < 5; ++rep) {
      const SpinBlock<double> s{h(tj), random_state(tj + 1, rng)};
      std::vector<Tomogram<double>> ts;
      for (const auto& d : direction_grid(4, 5, false)) ts.push_back({d, exact_tomogram(s, d)});
      const auto r = reconstruct_spin_block<double>(ts, s.j);
      CHECK(trace_distance(r.matrix, s.matrix) <= 1e-6);
      CHECK(fidelity(r.matrix, s.matrix) >= 1 - 1e-6);
    }
  }
}
