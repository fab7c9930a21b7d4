#include "polartomo/gaussian_fit.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <unsupported/Eigen/SpecialFunctions>

namespace polartomo {

Vec6 vec6(const Mat3& g) {
  Vec6 v;
  v << g(0, 0), g(1, 1), g(2, 2), g(0, 1), g(0, 2), g(1, 2);
  return v;
}

Mat3 from_vec6(const Vec6& v) {
  Mat3 g;
  g << v(0), v(3), v(4), v(3), v(1), v(5), v(4), v(5), v(2);
  return g;
}

Vec6 design_row(const Vec3& n) {
  Vec6 a;
  a << n.x() * n.x(), n.y() * n.y(), n.z() * n.z(), 2 * n.x() * n.y(), 2 * n.x() * n.z(), 2 * n.y() * n.z();
  return a;
}

const std::array<std::string, 6>& component_names() {
  static const std::array<std::string, 6> names{"G11", "G22", "G33", "G12", "G13", "G23"};
  return names;
}

VarianceRecord extract_variance(const Histogram& h, bool sheppard) {
  h.validate();
  const auto gm = grouped_moments(h);
  if (gm.total < 2) throw std::invalid_argument("variance needs at least two counts");
  VarianceRecord r;
  r.direction = h.direction;
  r.sample_mean = gm.mean;
  r.n_samples = gm.total;
  int occupied = 0;
  double w2 = 0.0;
  for (int i = 0; i < h.n_bins(); ++i) {
    if (h.counts[static_cast<std::size_t>(i)] == 0) continue;
    ++occupied;
    w2 += static_cast<double>(h.counts[static_cast<std::size_t>(i)]) * h.width(i) * h.width(i);
  }
  if (occupied < 2) {
    r.degenerate = true;
    return r;
  }
  double v = gm.variance;
  if (sheppard) v -= w2 / static_cast<double>(gm.total) / 12.0;
  r.sample_variance = std::max(v, 0.0);
  r.variance_stderr = r.sample_variance * std::sqrt(2.0 / static_cast<double>(gm.total - 1));
  return r;
}

double ConfidenceSpec::level() const { return std::erf(sigma_multiplier / std::sqrt(2.0)); }

ConfidenceSpec ConfidenceSpec::from_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must be in (0, 1)");
  return {Eigen::numext::ndtri(0.5 + 0.5 * level)};
}

namespace {

Eigen::MatrixXd design(std::span<const VarianceRecord> records) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(records.size()), 6);
  for (std::size_t j = 0; j < records.size(); ++j) a.row(static_cast<Eigen::Index>(j)) = design_row(records[j].direction.unit()).transpose();
  return a;
}

void check_rank(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double tol = 1e-10 * std::max(s(0), 1e-300);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) rank += s(i) > tol ? 1 : 0;
  if (rank == 6) return;
  const Eigen::MatrixXd null = svd.matrixV().rightCols(6 - rank);
  std::vector<std::string> missing;
  std::ostringstream msg;
  msg << "direction set determines only " << rank << " of 6 covariance components; unresolved:";
  for (int c = 0; c < 6; ++c) {
    if (null.row(c).norm() > 1e-6) {
      missing.push_back(component_names()[static_cast<std::size_t>(c)]);
      msg << " " << missing.back();
    }
  }
  throw Underdetermined(msg.str(), missing);
}

Mat3 upper(const Vec6& t) {
  Mat3 f;
  f << t(0), t(1), t(2), 0, t(3), t(4), 0, 0, t(5);
  return f;
}

/// d vec6(F^T F) / d t.
Mat6 jacobian(const Vec6& t) {
  const Mat3 f = upper(t);
  Mat6 j;
  for (int p = 0; p < 6; ++p) {
    Vec6 e = Vec6::Zero();
    e(p) = 1.0;
    const Mat3 ep = upper(e);
    j.col(p) = vec6(ep.transpose() * f + f.transpose() * ep);
  }
  return j;
}

struct Objective {
  const Eigen::MatrixXd& a;
  Eigen::VectorXd s, n;

  bool sigma(const Vec6& t, Eigen::VectorXd& out) const {
    const Mat3 f = upper(t);
    out = a * vec6(f.transpose() * f);
    return (out.array() > 0.0).all();
  }
  double value(const Eigen::VectorXd& sig) const {
    std::vector<double> terms(static_cast<std::size_t>(sig.size()));
    for (Eigen::Index j = 0; j < sig.size(); ++j) terms[static_cast<std::size_t>(j)] = -0.5 * n(j) * (std::log(sig(j)) + s(j) / sig(j));
    return pairwise_sum(terms);
  }
};

}  // namespace

PrincipalErrors propagate_errors(const Mat3& g, std::span<const VarianceRecord> records, const ConfidenceSpec& conf,
                                 ErrorModel model) {
  const Eigen::MatrixXd a = design(records);
  Eigen::VectorXd s2(a.rows());
  for (std::size_t j = 0; j < records.size(); ++j) s2(static_cast<Eigen::Index>(j)) = records[j].variance_stderr * records[j].variance_stderr;

  PrincipalErrors out;
  if (model == ErrorModel::Weighted && !(s2.array() > 0.0).all()) model = ErrorModel::Literal;
  out.model = model;
  if (model == ErrorModel::Weighted) {
    const Mat6 info = a.transpose() * s2.cwiseInverse().asDiagonal() * a;
    Eigen::CompleteOrthogonalDecomposition<Mat6> cod(info);
    cod.setThreshold(1e-12);
    out.pseudo_inverse_flagged = cod.rank() < 6;
    out.g_covariance = cod.pseudoInverse();
  } else {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    cod.setThreshold(1e-12);
    out.pseudo_inverse_flagged = cod.rank() < 6;
    const Eigen::MatrixXd pinv = cod.pseudoInverse();
    out.g_covariance = pinv * s2.asDiagonal() * pinv.transpose();
  }

  Eigen::SelfAdjointEigenSolver<Mat3> es(g);
  for (int i = 0; i < 3; ++i) {
    const Vec6 ai = design_row(es.eigenvectors().col(i));
    const double var = std::max(0.0, ai.dot(out.g_covariance * ai));
    out.standard_errors(i) = std::sqrt(var);
    const double half = conf.sigma_multiplier * out.standard_errors(i);
    out.intervals[static_cast<std::size_t>(i)] = {es.eigenvalues()(i) - half, es.eigenvalues()(i) + half, half};
  }
  return out;
}

Vec3 axis_misalignment_deg(const Vec3& lambda, const Mat3& axes) {
  Vec3 out;
  const double scale = std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
  for (int i = 0; i < 3; ++i) {
    bool degenerate = false;
    for (int k = 0; k < 3; ++k) degenerate = degenerate || (k != i && std::abs(lambda(i) - lambda(k)) <= 1e-9 * scale);
    if (degenerate) {
      out(i) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const double c = std::min(1.0, axes.col(i).cwiseAbs().maxCoeff());
    out(i) = std::acos(c) * 180.0 / kPi;
  }
  return out;
}

double misalignment_angle(const CovarianceFit& fit) { return fit.axis_misalignment_deg(2); }

CovarianceFit fit_covariance(std::span<const VarianceRecord> records, const FitOptions& opt) {
  if (records.size() < 6) throw std::invalid_argument("covariance fit needs at least six records");
  const Eigen::MatrixXd a = design(records);
  check_rank(a);

  Objective obj{a, Eigen::VectorXd(a.rows()), Eigen::VectorXd(a.rows())};
  double n_total = 0.0;
  for (std::size_t j = 0; j < records.size(); ++j) {
    if (records[j].n_samples < 2) throw std::invalid_argument("record with fewer than two samples");
    obj.s(static_cast<Eigen::Index>(j)) = records[j].sample_variance;
    obj.n(static_cast<Eigen::Index>(j)) = static_cast<double>(records[j].n_samples);
    n_total += obj.n(static_cast<Eigen::Index>(j));
  }

  // least-squares start, projected onto the positive definite cone
  const Vec6 g0 = a.completeOrthogonalDecomposition().solve(obj.s);
  Eigen::SelfAdjointEigenSolver<Mat3> es0(from_vec6(g0));
  const double floor = std::max(1e-8 * es0.eigenvalues().cwiseAbs().maxCoeff(), 1e-12);
  const Mat3 start = es0.eigenvectors() * es0.eigenvalues().cwiseMax(floor).asDiagonal() * es0.eigenvectors().transpose();
  const Mat3 f0 = Eigen::LLT<Mat3>(start).matrixU();
  Vec6 t;
  t << f0(0, 0), f0(0, 1), f0(0, 2), f0(1, 1), f0(1, 2), f0(2, 2);

  CovarianceFit fit;
  Eigen::VectorXd sig;
  obj.sigma(t, sig);
  double ll = obj.value(sig);
  fit.log_likelihood.push_back(ll);
  bool converged = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    const Mat6 j = jacobian(t);
    const Eigen::VectorXd gs = (0.5 * obj.n.array() * (obj.s - sig).array() / sig.array().square()).matrix();
    const Eigen::VectorXd ws = (0.5 * obj.n.array() / sig.array().square()).matrix();
    const Eigen::MatrixXd aj = a * j;
    const Vec6 grad = aj.transpose() * gs;
    const Mat6 info = aj.transpose() * ws.asDiagonal() * aj;
    fit.gradient_norm = grad.norm();
    const Vec6 step = info.ldlt().solve(grad);
    const double dec2 = grad.dot(step);
    if (!std::isfinite(dec2)) break;
    if (dec2 <= opt.tol * n_total) {
      converged = true;
      break;
    }
    double tau = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, tau *= 0.5) {
      Eigen::VectorXd trial;
      const Vec6 tt = t + tau * step;
      if (!obj.sigma(tt, trial)) continue;
      const double lt = obj.value(trial);
      if (lt >= ll) {
        t = tt;
        sig = trial;
        ll = lt;
        accepted = true;
        break;
      }
    }
    fit.iterations = it + 1;
    if (!accepted) {
      converged = dec2 <= 1e-6 * n_total;
      break;
    }
    fit.log_likelihood.push_back(ll);
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "covariance fit did not converge after " << fit.iterations << " iterations; gradient norm "
        << fit.gradient_norm;
    throw NonConvergence(msg.str(), fit.gradient_norm);
  }

  const Mat3 f = upper(t);
  fit.g = f.transpose() * f;
  Eigen::SelfAdjointEigenSolver<Mat3> es(fit.g);
  fit.principal_variances = es.eigenvalues();
  fit.principal_axes = es.eigenvectors();
  fit.confidence = opt.confidence;
  fit.errors = propagate_errors(fit.g, records, opt.confidence, opt.errors);
  fit.axis_misalignment_deg = axis_misalignment_deg(fit.principal_variances, fit.principal_axes);
  fit.misalignment_deg = fit.axis_misalignment_deg(2);

  Eigen::VectorXd wmean(a.rows());
  Eigen::MatrixXd m(a.rows(), 3);
  for (std::size_t j = 0; j < records.size(); ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    const double sd = std::sqrt(std::max(sig(r), 1e-300) / obj.n(r));
    m.row(r) = records[j].direction.unit().transpose() / sd;
    wmean(r) = records[j].sample_mean / sd;
    fit.residuals.push_back(obj.s(r) - sig(r));
  }
  fit.mean = m.completeOrthogonalDecomposition().solve(wmean);
  return fit;
}

}  // namespace polartomo
