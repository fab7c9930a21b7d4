#include "polartomo/ml_em.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace polartomo {

std::pair<std::size_t, int> SystemMatrix::cell(Eigen::Index row) const {
  if (row < 0 || row >= rows()) throw std::out_of_range("row outside the system matrix");
  const auto it = std::upper_bound(row_offset.begin(), row_offset.end(), static_cast<std::size_t>(row));
  const auto d = static_cast<std::size_t>(it - row_offset.begin()) - 1;
  return {d, static_cast<int>(static_cast<std::size_t>(row) - row_offset[d])};
}

SystemMatrix build_system_matrix(std::span<const Histogram> hs, const GridSpec& grid, const std::string& data_units) {
  grid.validate();
  if (!grid.has_extent()) throw std::invalid_argument("system matrix needs an explicit grid extent");
  if (grid.units != data_units) {
    throw std::invalid_argument("unit mismatch: grid in '" + grid.units + "', data in '" + data_units + "'");
  }
  if (hs.empty()) throw std::invalid_argument("no histograms");

  struct Dir {
    Vec3 n;
    double c0, w;
    int nb;
    std::size_t offset;
    int sub[3];
  };
  const Vec3 h(grid.spacing(0), grid.spacing(1), grid.spacing(2));
  std::vector<Dir> dirs;
  SystemMatrix sys;
  sys.grid = grid;
  std::size_t rows = 0;
  for (const auto& hist : hs) {
    hist.validate();
    const double w = hist.width(0);
    for (int i = 1; i < hist.n_bins(); ++i) {
      if (std::abs(hist.width(i) - w) > 1e-9 * std::abs(w)) throw std::invalid_argument("system matrix needs uniform bins");
    }
    Dir d{hist.direction.unit(), hist.center(0), w, hist.n_bins(), rows, {1, 1, 1}};
    for (int a = 0; a < 3; ++a) d.sub[a] = std::max(1, static_cast<int>(std::ceil(std::abs(d.n(a)) * h(a) / w - 1e-9)));
    dirs.push_back(d);
    sys.row_offset.push_back(rows);
    rows += static_cast<std::size_t>(hist.n_bins());
  }
  sys.row_offset.push_back(rows);

  const int n = grid.n_voxels;
  const auto n_vox = static_cast<Eigen::Index>(n) * n * n;
  std::size_t est = 0;
  for (const auto& d : dirs) est += static_cast<std::size_t>(d.sub[0] * d.sub[1] * d.sub[2]) + 2;
  sys.c.resize(static_cast<Eigen::Index>(rows), n_vox);
  sys.c.reserve(static_cast<Eigen::Index>(est * static_cast<std::size_t>(n_vox)));

  std::vector<std::vector<double>> accs;
  for (const auto& d : dirs) accs.emplace_back(static_cast<std::size_t>(d.nb), 0.0);
  std::vector<int> touched;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        const Eigen::Index col = (static_cast<Eigen::Index>(i) * n + j) * n + k;
        sys.c.startVec(col);
        const Vec3 x = grid.center + Vec3(grid.coordinate(0, i), grid.coordinate(1, j), grid.coordinate(2, k));
        for (std::size_t di = 0; di < dirs.size(); ++di) {
          const auto& d = dirs[di];
          auto& acc = accs[di];
          touched.clear();
          auto add = [&](int b, double v) {
            if (v == 0.0) return;
            if (acc[static_cast<std::size_t>(b)] == 0.0) touched.push_back(b);
            acc[static_cast<std::size_t>(b)] += v;
          };
          const double wt = 1.0 / (d.sub[0] * d.sub[1] * d.sub[2]);
          const double base = d.n.dot(x);
          for (int a = 0; a < d.sub[0]; ++a) {
            const double oa = d.n(0) * h(0) * ((a + 0.5) / d.sub[0] - 0.5);
            for (int b = 0; b < d.sub[1]; ++b) {
              const double ob = d.n(1) * h(1) * ((b + 0.5) / d.sub[1] - 0.5);
              for (int c = 0; c < d.sub[2]; ++c) {
                const double oc = d.n(2) * h(2) * ((c + 0.5) / d.sub[2] - 0.5);
                const double t = (base + oa + ob + oc - d.c0) / d.w;
                if (t <= 0.0) {
                  add(0, wt);
                } else if (t >= d.nb - 1) {
                  add(d.nb - 1, wt);
                } else {
                  const int lo = static_cast<int>(std::floor(t));
                  const double f = t - lo;
                  add(lo, wt * (1.0 - f));
                  if (lo + 1 < d.nb) add(lo + 1, wt * f);
                }
              }
            }
          }
          std::sort(touched.begin(), touched.end());
          for (int b : touched) {
            sys.c.insertBack(static_cast<Eigen::Index>(d.offset) + b, col) = acc[static_cast<std::size_t>(b)];
            acc[static_cast<std::size_t>(b)] = 0.0;
          }
        }
      }
    }
  }
  sys.c.finalize();
  sys.column_sums = Eigen::RowVectorXd::Ones(sys.c.rows()) * sys.c;
  return sys;
}

Eigen::VectorXd measured_vector(std::span<const Histogram> hs) {
  std::size_t rows = 0;
  for (const auto& h : hs) rows += h.counts.size();
  Eigen::VectorXd m(static_cast<Eigen::Index>(rows));
  Eigen::Index r = 0;
  for (const auto& h : hs) {
    if (h.n_samples == 0) throw std::invalid_argument("histogram with zero samples");
    for (auto c : h.counts) m(r++) = static_cast<double>(c) / static_cast<double>(h.n_samples);
  }
  return m;
}

double kl_divergence(const Eigen::Ref<const Eigen::VectorXd>& p, const Eigen::Ref<const Eigen::VectorXd>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  if ((p.array() < 0.0).any() || (q.array() < 0.0).any()) throw std::invalid_argument("kl_divergence: negative entry");
  const double sp = pairwise_sum(p), sq = pairwise_sum(q);
  if (!(sp > 0.0) || !(sq > 0.0)) throw std::invalid_argument("kl_divergence: zero total");
  std::vector<double> terms(static_cast<std::size_t>(p.size()), 0.0);
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (p(j) == 0.0) continue;
    const double pj = p(j) / sp, qj = std::max(q(j) / sq, kProbabilityFloor);
    terms[static_cast<std::size_t>(j)] = pj * std::log(pj / qj);
  }
  return std::max(0.0, pairwise_sum(terms));
}

EmState em_init(const SystemMatrix& sys, const Eigen::VectorXd& measured, const Eigen::VectorXd& values) {
  if (values.size() != sys.cols()) throw std::invalid_argument("initial values do not match the grid");
  if (measured.size() != sys.rows()) throw std::invalid_argument("measured vector does not match the system");
  if (!(values.array() > 0.0).all()) throw std::invalid_argument("EM needs a strictly positive start");
  EmState s;
  s.values = values;
  s.predicted = sys.c * values;
  s.kl = kl_divergence(measured, s.predicted);
  s.history.push_back(s.kl);
  return s;
}

EmState em_step(const EmState& state, const SystemMatrix& sys, const Eigen::VectorXd& measured) {
  if ((state.values.array() < 0.0).any()) throw std::invalid_argument("EM values must be non-negative");
  const Eigen::VectorXd w = state.predicted.size() == sys.rows() ? state.predicted : Eigen::VectorXd(sys.c * state.values);
  const double sw = pairwise_sum(w), sm = pairwise_sum(measured);
  EmState next = state;
  next.floored = 0;
  Eigen::VectorXd ratio = Eigen::VectorXd::Zero(w.size());
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    if (measured(j) == 0.0) continue;
    double wj = w(j);
    if (wj < kProbabilityFloor) {
      wj = kProbabilityFloor;
      ++next.floored;
    }
    ratio(j) = measured(j) / wj;
  }
  const Eigen::VectorXd back = sys.c.transpose() * ratio;
  const double scale = sw / sm;
  for (Eigen::Index k = 0; k < next.values.size(); ++k) {
    if (sys.column_sums(k) > 0.0) next.values(k) = state.values(k) * scale * back(k) / sys.column_sums(k);
  }
  ++next.iteration;
  next.predicted = sys.c * next.values;
  next.kl = kl_divergence(measured, next.predicted);
  next.history.push_back(next.kl);
  return next;
}

EmResult em_reconstruct(const Eigen::VectorXd& measured, const SystemMatrix& sys, Eigen::VectorXd init,
                        const EmOptions& opt) {
  if (init.size() == 0) init = Eigen::VectorXd::Constant(sys.cols(), 1.0 / static_cast<double>(sys.cols()));
  if (opt.max_iter < 0 || !(opt.tol >= 0.0)) throw std::invalid_argument("bad EM options");
  EmResult r;
  r.state = em_init(sys, measured, init);
  for (int it = 0; it < opt.max_iter; ++it) {
    const double prev = r.state.kl;
    r.state = em_step(r.state, sys, measured);
    if (std::abs(prev - r.state.kl) <= opt.tol * prev + 1e-15) {
      r.converged = true;
      break;
    }
  }
  r.grid.spec = sys.grid;
  r.grid.producer = "em";
  const double total = pairwise_sum(r.state.values);
  const double norm = 1.0 / (total * r.grid.voxel_volume());
  r.grid.values.resize(static_cast<std::size_t>(r.state.values.size()));
  for (Eigen::Index k = 0; k < r.state.values.size(); ++k) r.grid.values[static_cast<std::size_t>(k)] = r.state.values(k) * norm;
  return r;
}

}  // namespace polartomo
