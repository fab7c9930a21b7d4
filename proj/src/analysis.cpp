#include "polartomo/analysis.hpp"

#include <cmath>
#include <limits>

#include <unsupported/Eigen/SpecialFunctions>

#include "polartomo/gaussian_fit.hpp"

namespace polartomo {

std::pair<Axis, Axis> dark_plane_axes(Axis mean_axis) {
  switch (mean_axis) {
    case Axis::J1: return {Axis::J2, Axis::J3};
    case Axis::J2: return {Axis::J3, Axis::J1};
    case Axis::J3: return {Axis::J1, Axis::J2};
  }
  throw std::invalid_argument("invalid mean axis");
}

double dark_plane_variance(const Mat3& g, Axis mean_axis, double theta) {
  const auto [k, l] = dark_plane_axes(mean_axis);
  Vec3 n = Vec3::Zero();
  n(axis_index(k)) = std::cos(theta);
  n(axis_index(l)) = std::sin(theta);
  return n.dot(g * n);
}

SqueezingReport squeezing_report(const Mat3& g, Axis mean_axis, double mean_photons) {
  const auto [k, l] = dark_plane_axes(mean_axis);
  const int ik = axis_index(k), il = axis_index(l);
  const double gkk = g(ik, ik), gll = g(il, il), gkl = 0.5 * (g(ik, il) + g(il, ik));
  SqueezingReport r;
  r.mean_axis = mean_axis;
  r.mean_photons = mean_photons;
  const double mid = 0.5 * (gkk + gll);
  const double half = 0.5 * (gkk - gll);
  const double rad = std::hypot(half, gkl);
  r.var_sq = mid - rad;
  r.var_antisq = mid + rad;
  if (rad <= 1e-12 * std::max(std::abs(mid), 1e-300)) {
    r.theta_indeterminate = true;
    r.theta_sq = r.theta_antisq = std::numeric_limits<double>::quiet_NaN();
  } else {
    double ta = 0.5 * std::atan2(gkl, half);
    if (ta < 0.0) ta += kPi;
    double ts = ta + 0.5 * kPi;
    if (ts >= kPi) ts -= kPi;
    r.theta_antisq = ta;
    r.theta_sq = ts;
  }
  r.squeezing_db = r.var_sq > 0.0 ? 10.0 * std::log10(r.var_sq) : -std::numeric_limits<double>::infinity();
  r.antisqueezing_db = 10.0 * std::log10(r.var_antisq);
  r.is_polarization_squeezed = r.var_sq < 1.0 && r.var_antisq > 1.0;
  return r;
}

Image2D project_wigner_along_axis(const WignerGrid& grid, Axis axis) {
  const int ax = axis_index(axis);
  const int a_ax = ax == 0 ? 1 : 0;
  const int b_ax = ax == 2 ? 1 : 2;
  const int n = grid.n();
  Image2D img;
  img.values = Eigen::MatrixXd::Zero(n, n);
  img.a_coords.resize(n);
  img.b_coords.resize(n);
  for (int i = 0; i < n; ++i) {
    img.a_coords(i) = grid.spec.coordinate(a_ax, i);
    img.b_coords(i) = grid.spec.coordinate(b_ax, i);
  }
  const double h = grid.spec.spacing(ax);
  int idx[3];
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      std::vector<double> line(static_cast<std::size_t>(n));
      for (int c = 0; c < n; ++c) {
        idx[a_ax] = a;
        idx[b_ax] = b;
        idx[ax] = c;
        line[static_cast<std::size_t>(c)] = grid.at(idx[0], idx[1], idx[2]);
      }
      img.values(a, b) = pairwise_sum(line) * h;
    }
  }
  img.a_label = axis_name(static_cast<Axis>(a_ax));
  img.b_label = axis_name(static_cast<Axis>(b_ax));
  return img;
}

double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? 1.0 : -1.0) * term;
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

double chi2_survival(double x, int dof) {
  if (dof < 1) throw std::invalid_argument("chi-square needs at least one degree of freedom");
  if (x <= 0.0) return 1.0;
  return Eigen::numext::igammac(0.5 * dof, 0.5 * x);
}

GaussianityReport gaussianity_tests(const Histogram& h) {
  h.validate();
  GaussianityReport r;
  r.n = h.total();
  if (r.n < 100) throw std::invalid_argument("Gaussianity tests need at least 100 counts");
  const auto v = extract_variance(h);
  r.mean = v.sample_mean;
  r.variance = v.sample_variance;
  if (v.degenerate || !(r.variance > 0.0)) {
    r.notes.push_back("all counts in one bin; tests skipped");
    return r;
  }
  const double sd = std::sqrt(r.variance);
  const int nb = h.n_bins();
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - r.mean) / (sd * std::sqrt(2.0))); };
  std::vector<double> mass(static_cast<std::size_t>(nb));
  for (int i = 0; i < nb; ++i) {
    const double lo = i == 0 ? 0.0 : cdf(h.edges[static_cast<std::size_t>(i)]);
    const double hi = i == nb - 1 ? 1.0 : cdf(h.edges[static_cast<std::size_t>(i) + 1]);
    mass[static_cast<std::size_t>(i)] = std::max(hi - lo, 0.0);
  }
  const double n = static_cast<double>(r.n);

  double cum = 0.0, dmax = 0.0;
  for (int i = 0; i + 1 < nb; ++i) {
    cum += static_cast<double>(h.counts[static_cast<std::size_t>(i)]);
    dmax = std::max(dmax, std::abs(cum / n - cdf(h.edges[static_cast<std::size_t>(i) + 1])));
  }
  r.ks_done = true;
  r.ks_stat = dmax;
  const double sn = std::sqrt(n);
  r.ks_p = kolmogorov_q((sn + 0.12 + 0.11 / sn) * dmax);
  r.notes.push_back("KS evaluated at bin edges with estimated mean and variance; asymptotic p-value is conservative");

  std::vector<double> obs, expv;
  double o_acc = 0.0, e_acc = 0.0;
  for (int i = 0; i < nb; ++i) {
    o_acc += static_cast<double>(h.counts[static_cast<std::size_t>(i)]);
    e_acc += n * mass[static_cast<std::size_t>(i)];
    if (e_acc >= 5.0) {
      obs.push_back(o_acc);
      expv.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (expv.empty()) {
      obs.push_back(o_acc);
      expv.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      expv.back() += e_acc;
    }
  }
  r.chi2_bins = static_cast<int>(expv.size());
  r.chi2_dof = r.chi2_bins - 3;
  if (r.chi2_dof < 1) {
    r.notes.push_back("chi-square skipped: only " + std::to_string(r.chi2_bins) + " bins after pooling");
  } else {
    std::vector<double> terms(expv.size());
    for (std::size_t i = 0; i < expv.size(); ++i) terms[i] = (obs[i] - expv[i]) * (obs[i] - expv[i]) / expv[i];
    r.chi2_stat = pairwise_sum(terms);
    r.chi2_p = chi2_survival(r.chi2_stat, r.chi2_dof);
    r.chi2_done = true;
  }

  std::vector<double> kl(static_cast<std::size_t>(nb), 0.0);
  for (int i = 0; i < nb; ++i) {
    const double p = static_cast<double>(h.counts[static_cast<std::size_t>(i)]) / n;
    if (p == 0.0) continue;
    kl[static_cast<std::size_t>(i)] = p * std::log(p / std::max(mass[static_cast<std::size_t>(i)], 1e-300));
  }
  r.kl_to_best_gaussian = std::max(0.0, pairwise_sum(kl));
  return r;
}

}  // namespace polartomo
