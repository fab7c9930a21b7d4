#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "polartomo/forward_model.hpp"
#include "polartomo/wigner_grid.hpp"

namespace polartomo {

/// Overlaps c_jk between measurement cells j = (direction, bin) and voxels k.
struct SystemMatrix {
  Eigen::SparseMatrix<double> c;  ///< column-major, one column per voxel
  GridSpec grid;
  std::vector<std::size_t> row_offset;  ///< first row of each direction; back() == rows
  Eigen::VectorXd column_sums;

  Eigen::Index rows() const { return c.rows(); }
  Eigen::Index cols() const { return c.cols(); }
  std::pair<std::size_t, int> cell(Eigen::Index row) const;
};

/// Each voxel is split into sub-points fine enough to resolve the bins along n;
/// every sub-point's projection is shared linearly between the two nearest bin
/// centers (terminal bins absorb the overflow). Throws on unit mismatch or
/// non-uniform bins.
SystemMatrix build_system_matrix(std::span<const Histogram> hs, const GridSpec& grid,
                                 const std::string& data_units = "shot-noise");

/// counts / n_samples for every direction, stacked in row order.
Eigen::VectorXd measured_vector(std::span<const Histogram> hs);

struct EmState {
  Eigen::VectorXd values;
  Eigen::VectorXd predicted;  ///< sys * values
  int iteration = 0;
  double kl = 0.0;
  std::vector<double> history;
  std::size_t floored = 0;  ///< cells with w_j floored in the last step
};

inline constexpr double kProbabilityFloor = 1e-300;

/// Sum p ln(p/q) with 0 ln 0 = 0; inputs are normalized internally.
double kl_divergence(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& q);

EmState em_init(const SystemMatrix& sys, const Eigen::VectorXd& measured, const Eigen::VectorXd& values);
EmState em_step(const EmState& state, const SystemMatrix& sys, const Eigen::VectorXd& measured);

struct EmOptions {
  double tol = 1e-9;
  int max_iter = 5000;
};

struct EmResult {
  WignerGrid grid;  ///< density, integrates to 1
  EmState state;
  bool converged = false;
};

/// Empty init means uniform.
EmResult em_reconstruct(const Eigen::VectorXd& measured, const SystemMatrix& sys, Eigen::VectorXd init = {},
                        const EmOptions& opt = {});

}  // namespace polartomo
