#pragma once

#include <span>
#include <string>
#include <vector>

#include "polartomo/core.hpp"
#include "polartomo/forward_model.hpp"
#include "polartomo/wigner_grid.hpp"

namespace polartomo {

/// Probability density at the bin centers: counts / (n_samples * width).
struct DensityProfile {
  std::vector<double> centers;
  std::vector<double> density;
  double bin_width = 0.0;
};

DensityProfile normalize_histogram(const Histogram& h);

/// Ramp filter |f| times a Hamming window reaching zero at cutoff_fraction * Nyquist.
/// Edge-replicating padding to a power of two >= 4n; the ramp is the transform of the
/// sampled band-limited ramp kernel with the zero-frequency term removed.
std::vector<double> ramp_hamming_filter(std::span<const double> profile, double cutoff_fraction,
                                        double spacing = 1.0);

/// Parallel-beam projections in one plane; s = a cos(psi) + b sin(psi).
struct Sinogram {
  std::vector<double> angles;
  std::vector<std::vector<double>> profiles;
  std::vector<double> abscissa;  ///< uniformly spaced, shared by every profile
};

Image2D fbp_2d(const Sinogram& s, int n_pixels, double extent, double cutoff_fraction = 0.8);

struct RadonOptions {
  double cutoff_fraction = 0.8;
  int min_angles_per_plane = 8;
  int min_planes = 8;
  double extent_sigmas = 4.0;
};

/// Mean vector from per-direction histogram means (least squares on n . mu = mean).
Vec3 fit_mean(std::span<const Histogram> hs);

/// Fills a non-positive extent with extent_sigmas * sigma per axis, sigma taken from
/// the histogram whose direction is closest to that axis; center defaults to fit_mean.
GridSpec resolve_grid(std::span<const Histogram> hs, GridSpec spec, double extent_sigmas = 4.0);

/// Two-stage inverse Radon transform: per meridian plane 2D FBP, then a slice-wise
/// FBP across planes. Requires full-sphere data (see expand_by_symmetry).
WignerGrid reconstruct_3d(std::span<const Histogram> hs, const GridSpec& spec, const RadonOptions& opt = {});

/// Stage one alone: the projection of W along the normal of the meridian plane at phi,
/// on (u, J3) with u = J1 cos(phi) + J2 sin(phi).
Image2D reconstruct_meridian_plane(std::span<const Histogram> hs, double phi, const GridSpec& spec,
                                   const RadonOptions& opt = {});

struct EllipsoidFit {
  Vec3 center = Vec3::Zero();
  Vec3 semi_axes = Vec3::Zero();  ///< ascending
  Mat3 axes = Mat3::Identity();   ///< columns match semi_axes
  double level = 0.0;
  double max_value = 0.0;
  int n_points = 0;
  bool touches_boundary = false;
};

/// Least-squares ellipsoid through the level_fraction * max isosurface of the
/// connected region around the maximum.
EllipsoidFit isocontour_metrics(const WignerGrid& grid, double level_fraction);

/// Surface points used by isocontour_metrics, physical coordinates (fluctuation frame).
std::vector<Vec3> isocontour_points(const WignerGrid& grid, double level_fraction);

}  // namespace polartomo
