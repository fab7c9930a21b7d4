#include "polartomo/wigner_grid.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "polartomo/core.hpp"

namespace polartomo {

void GridSpec::validate() const {
  if (n_voxels < 3 || n_voxels % 2 == 0) throw std::invalid_argument("grid needs an odd voxel count >= 3");
  if (!has_extent()) throw std::invalid_argument("grid extent must be positive on every axis");
  if (!center.allFinite()) throw std::invalid_argument("grid center is not finite");
}

double WignerGrid::integral() const { return pairwise_sum(values) * voxel_volume(); }

double Image2D::integral() const {
  if (a_coords.size() < 2 || b_coords.size() < 2) return 0.0;
  const double da = a_coords(1) - a_coords(0), db = b_coords(1) - b_coords(0);
  return values.sum() * da * db;
}

Moments2D image_moments(const Image2D& img) {
  double m0 = 0;
  Eigen::Vector2d m1 = Eigen::Vector2d::Zero();
  Eigen::Matrix2d m2 = Eigen::Matrix2d::Zero();
  for (int a = 0; a < img.values.rows(); ++a) {
    for (int b = 0; b < img.values.cols(); ++b) {
      const double w = std::max(img.values(a, b), 0.0);
      const Eigen::Vector2d p(img.a_coords(a), img.b_coords(b));
      m0 += w;
      m1 += w * p;
      m2 += w * p * p.transpose();
    }
  }
  if (!(m0 > 0.0)) throw std::invalid_argument("image has no positive mass");
  Moments2D out;
  out.mean = m1 / m0;
  out.covariance = m2 / m0 - out.mean * out.mean.transpose();
  return out;
}

Moments3D grid_moments(const WignerGrid& grid) {
  const int n = grid.n();
  double m0 = 0;
  Vec3 m1 = Vec3::Zero();
  Mat3 m2 = Mat3::Zero();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const double w = std::max(grid.at(i, j, k), 0.0);
        if (w == 0.0) continue;
        const Vec3 p(grid.spec.coordinate(0, i), grid.spec.coordinate(1, j), grid.spec.coordinate(2, k));
        m0 += w;
        m1 += w * p;
        m2 += w * p * p.transpose();
      }
    }
  }
  if (!(m0 > 0.0)) throw std::invalid_argument("grid has no positive mass");
  Moments3D out;
  out.mean = m1 / m0;
  out.covariance = m2 / m0 - out.mean * out.mean.transpose();
  return out;
}

// Text header terminated by "end_header\n", then n^3 little-endian doubles.
void write_wigner_grid(const std::string& path, const WignerGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "polartomo-wigner-grid\n";
  out << "format_version 1\n";
  out << std::setprecision(17);
  out << "n_voxels " << grid.spec.n_voxels << "\n";
  out << "extent " << grid.spec.extent(0) << " " << grid.spec.extent(1) << " " << grid.spec.extent(2) << "\n";
  out << "center " << grid.spec.center(0) << " " << grid.spec.center(1) << " " << grid.spec.center(2) << "\n";
  out << "units " << grid.spec.units << "\n";
  out << "axes J1 J2 J3\n";
  out << "order row-major i(J1) j(J2) k(J3)\n";
  out << "producer " << (grid.producer.empty() ? "-" : grid.producer) << "\n";
  out << "manifest_hash " << (grid.manifest_hash.empty() ? "-" : grid.manifest_hash) << "\n";
  out << "end_header\n";
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(double)));
}

WignerGrid read_wigner_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  WignerGrid g;
  std::string line;
  std::getline(in, line);
  if (line != "polartomo-wigner-grid") throw std::runtime_error(path + " is not a Wigner grid file");
  while (std::getline(in, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "n_voxels") ls >> g.spec.n_voxels;
    else if (key == "extent") ls >> g.spec.extent(0) >> g.spec.extent(1) >> g.spec.extent(2);
    else if (key == "center") ls >> g.spec.center(0) >> g.spec.center(1) >> g.spec.center(2);
    else if (key == "units") ls >> g.spec.units;
    else if (key == "producer") ls >> g.producer;
    else if (key == "manifest_hash") ls >> g.manifest_hash;
  }
  if (line != "end_header") throw std::runtime_error("missing end_header in " + path);
  if (g.producer == "-") g.producer.clear();
  if (g.manifest_hash == "-") g.manifest_hash.clear();
  g.spec.validate();
  const std::size_t n = static_cast<std::size_t>(g.spec.n_voxels);
  g.values.resize(n * n * n);
  in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(g.values.size() * sizeof(double))) {
    throw std::runtime_error("truncated grid body in " + path);
  }
  return g;
}

}  // namespace polartomo
