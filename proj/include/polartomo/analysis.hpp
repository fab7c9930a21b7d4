#pragma once

#include <string>
#include <utility>
#include <vector>

#include "polartomo/core.hpp"
#include "polartomo/forward_model.hpp"
#include "polartomo/wigner_grid.hpp"

namespace polartomo {

/// Dark-plane basis (e_k, e_l) for a mean along `mean_axis`: J1 -> (J2, J3), J2 -> (J3, J1), J3 -> (J1, J2).
std::pair<Axis, Axis> dark_plane_axes(Axis mean_axis);

/// n(theta)^T G n(theta) with n(theta) = e_k cos(theta) + e_l sin(theta).
double dark_plane_variance(const Mat3& g, Axis mean_axis, double theta);

struct SqueezingReport {
  Axis mean_axis = Axis::J2;
  double mean_photons = 0.0;
  double theta_sq = 0.0;       ///< in [0, pi); NaN when the dark-plane block is degenerate
  double theta_antisq = 0.0;
  bool theta_indeterminate = false;
  double var_sq = 0.0;
  double var_antisq = 0.0;
  double squeezing_db = 0.0;
  double antisqueezing_db = 0.0;
  bool is_polarization_squeezed = false;
};

/// Shot noise is 1 in these units, so squeezing means var_sq < 1 < var_antisq.
SqueezingReport squeezing_report(const Mat3& g, Axis mean_axis, double mean_photons = 0.0);

/// Integral of the grid along `axis`; the image keeps the other two axes in ascending order.
Image2D project_wigner_along_axis(const WignerGrid& grid, Axis axis);

struct GaussianityReport {
  std::uint64_t n = 0;
  double mean = 0.0;
  double variance = 0.0;  ///< bin-width corrected
  bool ks_done = false;
  double ks_stat = 0.0;
  double ks_p = 0.0;
  bool chi2_done = false;
  double chi2_stat = 0.0;
  int chi2_dof = 0;
  int chi2_bins = 0;  ///< after pooling
  double chi2_p = 0.0;
  double kl_to_best_gaussian = 0.0;
  std::vector<std::string> notes;
};

/// KS (binned, asymptotic p), chi-square with pooling to expected count >= 5, and KL
/// from the empirical bin masses to those of the fitted Gaussian.
GaussianityReport gaussianity_tests(const Histogram& h);

/// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

/// Upper tail of the chi-square distribution.
double chi2_survival(double x, int dof);

}  // namespace polartomo
