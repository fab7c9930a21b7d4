#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "polartomo/core.hpp"
#include "polartomo/forward_model.hpp"

namespace polartomo {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Component order of vec6: G11, G22, G33, G12, G13, G23.
Vec6 vec6(const Mat3& g);
Mat3 from_vec6(const Vec6& v);
/// Row a with a . vec6(G) = n^T G n.
Vec6 design_row(const Vec3& n);
const std::array<std::string, 6>& component_names();

struct VarianceRecord {
  Direction direction;
  double sample_mean = 0.0;
  double sample_variance = 0.0;
  std::uint64_t n_samples = 0;
  double variance_stderr = 0.0;
  bool degenerate = false;
};

/// Grouped moments with the bin-width (Sheppard) correction; stderr from the chi-square law.
VarianceRecord extract_variance(const Histogram& h, bool sheppard = true);

/// Intervals are +- sigma_multiplier standard errors; level() is the implied two-sided coverage.
struct ConfidenceSpec {
  double sigma_multiplier = 3.0;

  double level() const;
  static ConfidenceSpec from_level(double level);
};

enum class ErrorModel {
  Weighted,  ///< (A^T S^-2 A)^-1, the covariance of the weighted estimate
  Literal,   ///< A+ S^2 A+^T
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double half_width = 0.0;
};

struct PrincipalErrors {
  Mat6 g_covariance = Mat6::Zero();
  Vec3 standard_errors = Vec3::Zero();
  std::array<Interval, 3> intervals{};
  ErrorModel model = ErrorModel::Weighted;
  bool pseudo_inverse_flagged = false;
};

/// First-order propagation of per-record variance errors to the principal variances.
PrincipalErrors propagate_errors(const Mat3& g, std::span<const VarianceRecord> records,
                                 const ConfidenceSpec& conf = {}, ErrorModel model = ErrorModel::Weighted);

struct FitOptions {
  ConfidenceSpec confidence;
  ErrorModel errors = ErrorModel::Weighted;
  double tol = 1e-12;  ///< on the Newton decrement squared per sample
  int max_iter = 200;
};

struct CovarianceFit {
  Mat3 g = Mat3::Zero();
  Vec3 mean = Vec3::Zero();
  Vec3 principal_variances = Vec3::Zero();  ///< ascending
  Mat3 principal_axes = Mat3::Identity();   ///< columns
  PrincipalErrors errors;
  ConfidenceSpec confidence;
  double misalignment_deg = 0.0;            ///< major axis vs nearest coordinate axis
  Vec3 axis_misalignment_deg = Vec3::Zero();  ///< per principal axis, NaN when degenerate
  std::vector<double> residuals;            ///< s_j - n_j^T G n_j
  std::vector<double> log_likelihood;       ///< one entry per accepted iterate
  int iterations = 0;
  double gradient_norm = 0.0;
};

/// Maximum likelihood G = F^T F (F upper triangular) by Fisher scoring with backtracking.
CovarianceFit fit_covariance(std::span<const VarianceRecord> records, const FitOptions& opt = {});

/// Angle in degrees between each principal axis and its nearest coordinate axis; NaN
/// for axes inside a degenerate eigenspace.
Vec3 axis_misalignment_deg(const Vec3& principal_variances, const Mat3& axes);

/// Major axis angle; NaN if the major eigenvalue is degenerate.
double misalignment_angle(const CovarianceFit& fit);

}  // namespace polartomo
