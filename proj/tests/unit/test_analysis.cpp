#include <doctest.h>

#include <cmath>
#include <random>

#include "polartomo/analysis.hpp"

using namespace polartomo;

namespace {

Mat3 random_spd(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Mat3 a;
  for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = g(rng);
  return a * a.transpose() + 0.1 * Mat3::Identity();
}

WignerGrid gaussian_grid(const Vec3& sd, const Vec3& shift, int n = 41) {
  WignerGrid grid;
  grid.spec.n_voxels = n;
  grid.spec.extent = 4.0 * sd;
  grid.values.assign(static_cast<std::size_t>(n) * n * n, 0.0);
  const double norm = 1.0 / (std::pow(2 * kPi, 1.5) * sd.prod());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec3 x(grid.spec.coordinate(0, i), grid.spec.coordinate(1, j), grid.spec.coordinate(2, k));
        grid.at(i, j, k) = norm * std::exp(-0.5 * (x - shift).cwiseQuotient(sd).squaredNorm());
      }
  return grid;
}

}  // namespace

TEST_CASE("dark plane variance") {
  for (double t : {0.0, 0.4, 1.3, 2.9}) CHECK(dark_plane_variance(Mat3::Identity(), Axis::J2, t) == doctest::Approx(1.0));

  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    const Mat3 g = random_spd(rng);
    for (Axis ax : {Axis::J1, Axis::J2, Axis::J3}) {
      CHECK(dark_plane_variance(g, ax, 0.7) == doctest::Approx(dark_plane_variance(g, ax, 0.7 + kPi)).epsilon(1e-12));
      const auto [k, l] = dark_plane_axes(ax);
      Eigen::Matrix2d b;
      b << g(axis_index(k), axis_index(k)), g(axis_index(k), axis_index(l)), g(axis_index(l), axis_index(k)),
          g(axis_index(l), axis_index(l));
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(b);
      const auto r = squeezing_report(g, ax);
      CHECK(std::abs(r.var_sq - es.eigenvalues()(0)) < 1e-12 * es.eigenvalues()(1));
      CHECK(std::abs(r.var_antisq - es.eigenvalues()(1)) < 1e-12 * es.eigenvalues()(1));
      CHECK(dark_plane_variance(g, ax, r.theta_sq) == doctest::Approx(r.var_sq).epsilon(1e-12));
      CHECK(dark_plane_variance(g, ax, r.theta_antisq) == doctest::Approx(r.var_antisq).epsilon(1e-12));
      CHECK(std::abs(std::abs(r.theta_sq - r.theta_antisq) - kPi / 2) < 1e-12);
      double sweep = 1e300;
      for (int s = 0; s < 3600; ++s) sweep = std::min(sweep, dark_plane_variance(g, ax, kPi * s / 3600));
      CHECK(sweep >= r.var_sq - 1e-12);
    }
  }
}

TEST_CASE("squeezing report") {
  const auto paper = preset_state("paper");
  auto r = squeezing_report(paper.covariance, paper.excitation_axis, paper.mean_photons);
  CHECK(r.var_sq == doctest::Approx(0.44024).epsilon(1e-4));
  CHECK(r.squeezing_db == doctest::Approx(-3.563).epsilon(1e-3));
  CHECK(r.is_polarization_squeezed);
  CHECK(r.var_antisq > 300);

  r = squeezing_report(Mat3::Identity(), Axis::J2);
  CHECK_FALSE(r.is_polarization_squeezed);
  CHECK(r.theta_indeterminate);
  CHECK(std::isnan(r.theta_sq));

  r = squeezing_report(Vec3(0.5, 1.0, 2.0).asDiagonal(), Axis::J2);
  CHECK(r.is_polarization_squeezed);
  CHECK(r.var_sq == doctest::Approx(0.5));
  CHECK(dark_plane_variance(Vec3(0.5, 1.0, 2.0).asDiagonal(), Axis::J2, r.theta_sq) == doctest::Approx(0.5));
  CHECK(r.theta_sq == doctest::Approx(kPi / 2));

  const Mat3 base = Vec3(0.5, 1.0, 2.0).asDiagonal();
  for (double a : {0.3, 1.1, 2.5}) {
    const Mat3 rot = Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
    const auto q = squeezing_report(rot * base * rot.transpose(), Axis::J2);
    CHECK(q.var_sq == doctest::Approx(0.5));
    CHECK(q.var_antisq == doctest::Approx(2.0));
    CHECK(q.is_polarization_squeezed);
  }
}

TEST_CASE("projection along an axis") {
  const Vec3 sd(1.0, 0.6, 1.5);
  const auto grid = gaussian_grid(sd, Vec3::Zero());
  for (Axis ax : {Axis::J1, Axis::J2, Axis::J3}) {
    const auto img = project_wigner_along_axis(grid, ax);
    CHECK(std::abs(img.integral() - grid.integral()) < 1e-10);
    const auto m = image_moments(img);
    const int a = ax == Axis::J1 ? 1 : 0, b = ax == Axis::J3 ? 1 : 2;
    CHECK(m.covariance(0, 0) == doctest::Approx(sd(a) * sd(a)).epsilon(0.02));
    CHECK(m.covariance(1, 1) == doctest::Approx(sd(b) * sd(b)).epsilon(0.02));
  }
  const auto p2 = project_wigner_along_axis(grid, Axis::J2);
  CHECK(p2.a_label == "J1");
  CHECK(p2.b_label == "J3");

  const double hx = grid.spec.spacing(0);
  const auto shifted = gaussian_grid(sd, Vec3(hx, 0, 0));
  const auto ps = project_wigner_along_axis(shifted, Axis::J2);
  for (int i = 0; i + 1 < p2.values.rows(); ++i)
    for (int k = 0; k < p2.values.cols(); ++k) CHECK(std::abs(ps.values(i + 1, k) - p2.values(i, k)) < 1e-12);
}

TEST_CASE("gaussianity battery") {
  GaussianState iso;
  int accepted = 0;
  const int seeds = 60;
  for (int s = 0; s < seeds; ++s) {
    SampleOptions o;
    o.n_samples = 100000;
    o.lo = -6;
    o.hi = 6;
    o.seed = 500 + s;
    const auto r = gaussianity_tests(sample_histogram(iso, Direction{1.0, 0.5}, o));
    CHECK(r.ks_done);
    CHECK(r.chi2_done);
    accepted += r.ks_p >= 0.05 && r.chi2_p >= 0.05 ? 1 : 0;
  }
  CHECK(accepted >= 0.9 * seeds);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  Histogram h;
  h.direction = Direction{0, 0};
  h.edges = uniform_edges(-3, 3, 751);
  h.counts.assign(751, 0);
  for (int i = 0; i < 100000; ++i) ++h.counts[static_cast<std::size_t>((u(rng) + 3) / 6 * 751)];
  h.n_samples = 100000;
  const auto ru = gaussianity_tests(h);
  CHECK(ru.chi2_p < 0.001);
  CHECK(ru.ks_p < 0.001);

  Histogram exact;
  exact.direction = Direction{0, 0};
  exact.edges = uniform_edges(-8, 8, 401);
  exact.counts.resize(401);
  const double total = 1e12;
  std::uint64_t sum = 0;
  for (int i = 0; i < 401; ++i) {
    const double a = i == 0 ? 0.0 : 0.5 * std::erfc(-exact.edges[i] / std::sqrt(2.0));
    const double b = i == 400 ? 1.0 : 0.5 * std::erfc(-exact.edges[i + 1] / std::sqrt(2.0));
    exact.counts[i] = static_cast<std::uint64_t>(std::llround((b - a) * total));
    sum += exact.counts[i];
  }
  exact.n_samples = sum;
  CHECK(gaussianity_tests(exact).kl_to_best_gaussian < 1e-8);

  Histogram one;
  one.edges = uniform_edges(-1, 1, 5);
  one.counts = {0, 0, 500, 0, 0};
  one.n_samples = 500;
  const auto r1 = gaussianity_tests(one);
  CHECK_FALSE(r1.ks_done);
  CHECK_FALSE(r1.notes.empty());
  one.counts = {0, 0, 50, 0, 0};
  one.n_samples = 50;
  CHECK_THROWS_AS(gaussianity_tests(one), std::invalid_argument);

  CHECK(kolmogorov_q(0.0) == 1.0);
  CHECK(kolmogorov_q(1.36) == doctest::Approx(0.0494).epsilon(0.01));
  CHECK(chi2_survival(3.841, 1) == doctest::Approx(0.05).epsilon(1e-3));
}
