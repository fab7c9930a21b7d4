#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polartomo/core.hpp"

namespace polartomo {

/// Voxel grid layout shared by the Radon and EM reconstructions.
///
/// Extent is the half-width per axis; a non-positive component asks the
/// reconstruction to choose it from the data.
struct GridSpec {
  int n_voxels = 65;
  Vec3 extent = Vec3::Zero();
  Vec3 center = Vec3::Zero();
  std::string units = "shot-noise";

  void validate() const;
  bool has_extent() const { return (extent.array() > 0.0).all(); }
  double spacing(int axis) const { return 2.0 * extent(axis) / (n_voxels - 1); }
  double coordinate(int axis, int i) const { return -extent(axis) + i * spacing(axis); }
};

/// Wigner function sampled on a box in the fluctuation frame.
/// values index: (i * n + j) * n + k with i along J1, j along J2, k along J3.
struct WignerGrid {
  GridSpec spec;
  std::vector<double> values;
  std::string producer;
  std::string manifest_hash;

  int n() const { return spec.n_voxels; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n() + j) * n() + k;
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  double& at(int i, int j, int k) { return values[index(i, j, k)]; }
  double voxel_volume() const { return spec.spacing(0) * spec.spacing(1) * spec.spacing(2); }
  double integral() const;
};

/// 2D image, values(a, b) at (a_coords[a], b_coords[b]).
struct Image2D {
  Eigen::VectorXd a_coords, b_coords;
  Eigen::MatrixXd values;
  std::string a_label, b_label;
  std::vector<std::string> warnings;

  double integral() const;
};

struct Moments2D {
  Eigen::Vector2d mean;
  Eigen::Matrix2d covariance;
};

struct Moments3D {
  Vec3 mean;
  Mat3 covariance;
};

/// Moments of max(values, 0).
Moments2D image_moments(const Image2D& img);
Moments3D grid_moments(const WignerGrid& grid);

void write_wigner_grid(const std::string& path, const WignerGrid& grid);
WignerGrid read_wigner_grid(const std::string& path);

}  // namespace polartomo
