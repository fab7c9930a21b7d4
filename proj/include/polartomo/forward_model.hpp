#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "polartomo/core.hpp"
#include "polartomo/spin_algebra.hpp"

namespace polartomo {

struct WaveplateSetting {
  double alpha = 0.0;  ///< half-wave plate
  double beta = 0.0;   ///< quarter-wave plate

  /// Both angles reduced to [0, pi).
  WaveplateSetting reduced() const;
};

Direction waveplate_to_direction(const WaveplateSetting& w);
WaveplateSetting direction_to_waveplate(const Direction& d);

/// Bright-regime state in shot-noise units, fluctuation frame.
struct GaussianState {
  Vec3 mean = Vec3::Zero();
  double mean_photons = 0.0;
  Mat3 covariance = Mat3::Identity();
  Axis excitation_axis = Axis::J2;
  std::string name;

  /// Throws std::invalid_argument (message lists eigenvalues) unless symmetric PSD.
  void validate() const;
};

GaussianState preset_state(const std::string& name);
std::vector<std::string> preset_names();

struct Histogram {
  Direction direction;
  WaveplateSetting waveplate;
  std::uint64_t n_samples = 0;
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;
  std::uint64_t seed = 0;
  double shot_noise_variance = 1.0;

  int n_bins() const { return static_cast<int>(counts.size()); }
  double center(int i) const { return 0.5 * (edges[i] + edges[i + 1]); }
  double width(int i) const { return edges[i + 1] - edges[i]; }
  std::uint64_t total() const;
  void validate() const;
};

/// Mean and variance of the binned data from bin centers, no width correction.
struct GroupedMoments {
  double mean = 0.0;
  double variance = 0.0;
  std::uint64_t total = 0;
};
GroupedMoments grouped_moments(const Histogram& h);

/// n_bins + 1 equally spaced edges over [lo, hi].
std::vector<double> uniform_edges(double lo, double hi, int n_bins);

template <typename Scalar = double>
RVector<Scalar> exact_tomogram(const SpinBlock<Scalar>& block, const Direction& dir) {
  const CMatrix<Scalar> D = displacement_matrix<Scalar>(block.j, dir);
  return (D.adjoint() * block.matrix * D).diagonal().real();
}

struct Projection1D {
  double mean = 0.0;
  double variance = 0.0;
};

Projection1D gaussian_tomogram(const GaussianState& state, const Direction& dir);

struct SampleOptions {
  std::uint64_t n_samples = 100000;
  int n_bins = 751;
  double lo = -1.0, hi = 1.0;
  std::uint64_t seed = 1;
  std::uint64_t direction_index = 0;
  double electronic_noise_variance = 0.0;
};

/// Histogram of n_samples draws; samples outside [lo, hi) land in the terminal bins.
Histogram sample_histogram(const GaussianState& state, const Direction& dir, const SampleOptions& opt);

/// Expected counts of n_samples draws, rounded per bin; n_samples is reset to their sum.
Histogram expected_histogram(const GaussianState& state, const Direction& dir, const SampleOptions& opt);

/// Default sampling window: mean +- 6 sigma_max over the given directions.
std::pair<double, double> default_range(const GaussianState& state, std::span<const Direction> dirs);

/// Regular lattice. Octant: theta_i = (pi/2) i/(n-1), phi likewise (pi/4 when n = 1).
/// Full sphere: theta_i = pi (i + 1/2)/n, phi_j = 2 pi j / n.
std::vector<Direction> direction_grid(int n_theta, int n_phi, bool octant_only);

/// Nine directions: the three axes and the six face diagonals (x+-y, x+-z, y+-z).
std::vector<Direction> reduced_scan();

/// Mirror one octant's histograms into all eight octants, reusing counts.
/// With dedup, directions that coincide after mirroring are kept once (first wins).
std::vector<Histogram> expand_by_symmetry(std::span<const Histogram> octant, bool dedup = true);

// ---------------------------------------------------------------------------
// Histogram set container

inline constexpr std::uint32_t kHistogramSetVersion = 1;

struct HistogramSet {
  std::string units = "shot-noise";
  double shot_noise_variance = 1.0;
  std::uint64_t global_seed = 0;
  std::string state_json = "null";     ///< synthetic state description, or null
  std::string manifest_json = "{}";
  std::string manifest_hash;
  std::vector<Histogram> records;
};

std::string state_to_json(const GaussianState& s);
GaussianState state_from_json(const std::string& text);

void write_histogram_set(const std::string& path, const HistogramSet& set);
HistogramSet read_histogram_set(const std::string& path);
std::vector<char> encode_histogram_set(const HistogramSet& set);
HistogramSet decode_histogram_set(std::span<const char> bytes);

}  // namespace polartomo
