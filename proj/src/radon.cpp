#include "polartomo/radon.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <array>
#include <deque>
#include <map>
#include <sstream>

#include <unsupported/Eigen/FFT>

namespace polartomo {

namespace {

/// Filtered profile on a uniform abscissa, linearly interpolated, zero outside.
struct Filtered {
  double s0 = 0.0, ds = 1.0;
  std::vector<double> q;

  double operator()(double s) const {
    const double t = (s - s0) / ds;
    if (!(t >= 0.0)) return 0.0;
    const auto i = static_cast<std::size_t>(t);
    if (i + 1 >= q.size()) return i + 1 == q.size() && t == double(i) ? q[i] : 0.0;
    const double f = t - double(i);
    return q[i] + f * (q[i + 1] - q[i]);
  }
};

/// Sums k neighbouring bins; leftover bins are dropped evenly from both ends.
Filtered rebin(const DensityProfile& p, int k) {
  Filtered out;
  const int n = static_cast<int>(p.density.size());
  k = std::clamp(k, 1, n);
  const int m = n / k;
  const int skip = (n - m * k) / 2;
  out.q.assign(static_cast<std::size_t>(m), 0.0);
  for (int b = 0; b < m; ++b) {
    double s = 0.0;
    for (int i = 0; i < k; ++i) s += p.density[static_cast<std::size_t>(skip + b * k + i)];
    out.q[static_cast<std::size_t>(b)] = s / k;
  }
  out.ds = p.bin_width * k;
  out.s0 = p.centers[static_cast<std::size_t>(skip)] + 0.5 * (k - 1) * p.bin_width;
  return out;
}

/// Pads with zeros so the samples cover [lo, hi].
void zero_extend(Filtered& f, double lo, double hi) {
  const auto before = static_cast<std::size_t>(std::max(0.0, std::ceil((f.s0 - lo) / f.ds)));
  const double last = f.s0 + f.ds * double(f.q.size() - 1);
  const auto after = static_cast<std::size_t>(std::max(0.0, std::ceil((hi - last) / f.ds)));
  f.q.insert(f.q.begin(), before, 0.0);
  f.q.insert(f.q.end(), after, 0.0);
  f.s0 -= f.ds * double(before);
}

/// Half the gap to each circular neighbour on [0, pi).
std::vector<double> angle_weights(const std::vector<double>& sorted) {
  const std::size_t n = sorted.size();
  std::vector<double> w(n, kPi);
  if (n < 2) return w;
  for (std::size_t i = 0; i < n; ++i) {
    const double prev = i == 0 ? sorted[n - 1] - kPi : sorted[i - 1];
    const double next = i + 1 == n ? sorted[0] + kPi : sorted[i + 1];
    w[i] = 0.5 * (next - prev);
  }
  return w;
}

struct PlaneEntry {
  std::size_t hist;
  double psi;
  bool reversed;
};

/// Groups entries by psi (rounded) and spreads each group's weight over its members.
std::vector<double> entry_weights(const std::vector<PlaneEntry>& entries, int* distinct) {
  std::map<long long, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < entries.size(); ++i) groups[std::llround(entries[i].psi * 1e9)].push_back(i);
  std::vector<double> psis;
  for (const auto& [key, idx] : groups) psis.push_back(entries[idx.front()].psi);
  const auto w = angle_weights(psis);
  std::vector<double> out(entries.size());
  std::size_t g = 0;
  for (const auto& [key, idx] : groups) {
    for (auto i : idx) out[i] = w[g] / double(idx.size());
    ++g;
  }
  if (distinct) *distinct = static_cast<int>(groups.size());
  return out;
}

void check_uniform(const Histogram& h) {
  const double w0 = h.width(0);
  for (int i = 1; i < h.n_bins(); ++i) {
    if (std::abs(h.width(i) - w0) > 1e-9 * std::abs(w0)) {
      throw std::invalid_argument("Radon reconstruction needs uniformly binned histograms");
    }
  }
}

double plane_key(double phi) {
  double p = std::fmod(phi, kPi);
  if (p < 0.0) p += kPi;
  if (p > kPi - 1e-9) p = 0.0;
  return p;
}

struct Planes {
  std::map<long long, double> phi;                     // key -> plane azimuth in [0, pi)
  std::map<long long, std::vector<PlaneEntry>> entries;
};

bool is_pole(const Vec3& n) { return std::hypot(n.x(), n.y()) < 1e-9; }

PlaneEntry make_entry(std::size_t idx, const Vec3& n, double phi_p) {
  const Vec3 eu(std::cos(phi_p), std::sin(phi_p), 0.0);
  double psi = std::atan2(n.dot(eu), n.z());
  bool rev = false;
  if (psi < 0.0) {
    psi += kPi;
    rev = true;
  }
  if (psi >= kPi - 1e-12) {
    psi = 0.0;
    rev = !rev;
  }
  return {idx, psi, rev};
}

Planes group_planes(std::span<const Histogram> hs) {
  Planes pl;
  std::vector<std::size_t> poles;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const Vec3 n = hs[i].direction.unit();
    if (is_pole(n)) {
      poles.push_back(i);
      continue;
    }
    const double p = plane_key(std::atan2(n.y(), n.x()));
    const long long key = std::llround(p * 1e7);
    pl.phi.emplace(key, p);
    pl.entries[key].push_back(make_entry(i, n, pl.phi[key]));
  }
  for (auto& [key, list] : pl.entries) {
    for (auto i : poles) list.push_back(make_entry(i, hs[i].direction.unit(), pl.phi[key]));
  }
  return pl;
}

std::vector<double> axis_coords(int n, double extent) {
  std::vector<double> c(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) c[static_cast<std::size_t>(i)] = -extent + 2.0 * extent * i / (n - 1);
  return c;
}

constexpr int kUpsample = 4;
constexpr double kPlaneMargin = 1.25;

std::vector<double> filter_upsampled(std::span<const double> profile, double cutoff_fraction, double spacing,
                                     int upsample, double window_spacing);

double profile_reach(const GridSpec& g) {
  const Vec3 h(g.spacing(0), g.spacing(1), g.spacing(2));
  return kPlaneMargin * (g.extent.x() + g.extent.y()) + g.extent.z() + h.maxCoeff();
}

/// Filtered, centered profile rebinned to the voxel pitch seen along n.
Filtered filter_one(const Histogram& hist, const GridSpec& g, double cutoff, double reach) {
  check_uniform(hist);
  const Vec3 h(g.spacing(0), g.spacing(1), g.spacing(2));
  const auto prof = normalize_histogram(hist);
  const Vec3 n = hist.direction.unit();
  const double pitch = n.cwiseProduct(h).norm();
  const int k = std::max(1, static_cast<int>(std::floor(pitch / prof.bin_width)));
  Filtered f = rebin(prof, k);
  const double c = n.dot(g.center);
  zero_extend(f, c - reach, c + reach);
  f.q = filter_upsampled(f.q, cutoff, f.ds, kUpsample, pitch);
  f.ds /= kUpsample;
  f.s0 -= c;
  return f;
}

/// Entries renumbered to index the returned profiles.
std::vector<Filtered> filter_entries(std::span<const Histogram> hs, std::vector<PlaneEntry>& entries, const GridSpec& g,
                                     double cutoff) {
  const double reach = profile_reach(g);
  std::vector<Filtered> out;
  out.reserve(entries.size());
  for (auto& e : entries) {
    out.push_back(filter_one(hs[e.hist], g, cutoff, reach));
    e.hist = out.size() - 1;
  }
  return out;
}

/// Stage one for one plane: image(u, z) = sum_i w_i q_i(+-(z cos psi + u sin psi)).
Eigen::MatrixXd backproject_plane(const std::vector<PlaneEntry>& entries, const std::vector<double>& weights,
                                  const std::vector<Filtered>& filtered, const std::vector<double>& u,
                                  const std::vector<double>& z) {
  Eigen::MatrixXd img = Eigen::MatrixXd::Zero(static_cast<int>(u.size()), static_cast<int>(z.size()));
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const auto& en = entries[e];
    const auto& q = filtered[en.hist];
    const double c = std::cos(en.psi), s = std::sin(en.psi), sign = en.reversed ? -1.0 : 1.0;
    const double w = weights[e];
    for (std::size_t b = 0; b < z.size(); ++b) {
      for (std::size_t a = 0; a < u.size(); ++a) {
        img(static_cast<int>(a), static_cast<int>(b)) += w * q(sign * (z[b] * c + u[a] * s));
      }
    }
  }
  return img;
}

}  // namespace

DensityProfile normalize_histogram(const Histogram& h) {
  h.validate();
  const auto total = h.total();
  if (total == 0 || h.n_samples == 0) throw std::invalid_argument("histogram is empty");
  DensityProfile p;
  p.centers.resize(static_cast<std::size_t>(h.n_bins()));
  p.density.resize(p.centers.size());
  for (int i = 0; i < h.n_bins(); ++i) {
    p.centers[static_cast<std::size_t>(i)] = h.center(i);
    p.density[static_cast<std::size_t>(i)] = double(h.counts[static_cast<std::size_t>(i)]) / (double(h.n_samples) * h.width(i));
  }
  p.bin_width = h.width(0);
  return p;
}

namespace {

// Filtered profile resampled at spacing / upsample by zero-extending the spectrum.
// The window reaches zero at cutoff_fraction times the Nyquist of the finer of the two spacings.
std::vector<double> filter_upsampled(std::span<const double> profile, double cutoff_fraction, double spacing,
                                     int upsample, double window_spacing) {
  if (!(cutoff_fraction > 0.0 && cutoff_fraction <= 1.0)) throw std::invalid_argument("cutoff fraction must be in (0, 1]");
  if (profile.size() < 8) throw std::invalid_argument("profile too short to filter");
  if (!(spacing > 0.0)) throw std::invalid_argument("spacing must be positive");
  const std::size_t n = profile.size();
  std::size_t L = 1;
  while (L < 4 * n) L <<= 1;
  std::vector<double> padded(L);
  std::copy(profile.begin(), profile.end(), padded.begin());
  const std::size_t tail = (L - n) / 2;
  for (std::size_t i = n; i < n + tail; ++i) padded[i] = profile.back();
  for (std::size_t i = n + tail; i < L; ++i) padded[i] = profile.front();

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  std::vector<double> kernel(L, 0.0);
  kernel[0] = 0.25 / spacing;
  for (std::size_t i = 1; i <= L / 2; ++i) {
    if (i % 2 == 0) continue;
    const double v = -1.0 / (kPi * kPi * double(i) * double(i) * spacing);
    kernel[i] = v;
    if (i != L / 2) kernel[L - i] = v;
  }
  std::vector<std::complex<double>> ramp;
  fft.fwd(ramp, kernel);
  const double fc = cutoff_fraction * 0.5 / std::min(spacing, window_spacing);
  const std::size_t M = L * static_cast<std::size_t>(upsample);
  std::vector<std::complex<double>> wide(M, 0.0);
  for (std::size_t k = 0; k < L; ++k) {
    const double kk = k <= L / 2 ? double(k) : double(k) - double(L);
    const double f = std::abs(kk) / (double(L) * spacing);
    const double hval = k > 0 && f <= fc ? ramp[k].real() * (0.54 + 0.46 * std::cos(kPi * f / fc)) : 0.0;
    const std::size_t dst = kk >= 0 ? static_cast<std::size_t>(kk) : M - static_cast<std::size_t>(-kk);
    if (k == L / 2 && upsample > 1) {
      wide[dst] += 0.5 * spec[k] * hval * double(upsample);
      wide[M - L / 2] += 0.5 * spec[k] * hval * double(upsample);
    } else {
      wide[dst] = spec[k] * hval * double(upsample);
    }
  }
  std::vector<double> out;
  fft.inv(out, wide);
  out.resize((n - 1) * static_cast<std::size_t>(upsample) + 1);
  return out;
}

}  // namespace

std::vector<double> ramp_hamming_filter(std::span<const double> profile, double cutoff_fraction, double spacing) {
  return filter_upsampled(profile, cutoff_fraction, spacing, 1, spacing);
}

Image2D fbp_2d(const Sinogram& s, int n_pixels, double extent, double cutoff_fraction) {
  if (s.angles.size() != s.profiles.size()) throw std::invalid_argument("one profile per angle required");
  if (n_pixels < 2 || !(extent > 0.0)) throw std::invalid_argument("bad image geometry");
  if (s.abscissa.size() < 8) throw std::invalid_argument("abscissa too short");
  const double ds = s.abscissa[1] - s.abscissa[0];
  for (const auto& p : s.profiles) {
    if (p.size() != s.abscissa.size()) throw std::invalid_argument("profiles must share the abscissa");
  }
  const double pix = 2.0 * extent / (n_pixels - 1);
  const int k = std::max(1, static_cast<int>(std::floor(pix / ds)));
  const double reach = std::sqrt(2.0) * extent + pix;

  std::vector<PlaneEntry> entries;
  std::vector<Filtered> filtered;
  for (std::size_t i = 0; i < s.angles.size(); ++i) {
    double a = std::fmod(s.angles[i], 2 * kPi);
    if (a < 0.0) a += 2 * kPi;
    const bool rev = a >= kPi;
    const double psi = rev ? a - kPi : a;
    entries.push_back({i, psi, rev});
    DensityProfile dp{s.abscissa, s.profiles[i], ds};
    Filtered f = rebin(dp, k);
    zero_extend(f, -reach, reach);
    f.q = filter_upsampled(f.q, cutoff_fraction, f.ds, kUpsample, pix);
    f.ds /= kUpsample;
    filtered.push_back(std::move(f));
  }
  int distinct = 0;
  const auto w = entry_weights(entries, &distinct);
  const auto a = axis_coords(n_pixels, extent);
  // backproject_plane uses s = b cos(psi) + a sin(psi); swap roles to get s = a cos + b sin.
  const Eigen::MatrixXd img = backproject_plane(entries, w, filtered, a, a);

  Image2D out;
  out.a_coords = Eigen::Map<const Eigen::VectorXd>(a.data(), n_pixels);
  out.b_coords = out.a_coords;
  out.values = img.transpose();
  out.a_label = "a";
  out.b_label = "b";
  if (distinct < 8) out.warnings.push_back("only " + std::to_string(distinct) + " distinct angles; reconstruction is poorly conditioned");
  return out;
}

Vec3 fit_mean(std::span<const Histogram> hs) {
  if (hs.empty()) throw std::invalid_argument("no histograms");
  Eigen::MatrixXd A(static_cast<int>(hs.size()), 3);
  Eigen::VectorXd b(static_cast<int>(hs.size()));
  for (std::size_t i = 0; i < hs.size(); ++i) {
    A.row(static_cast<int>(i)) = hs[i].direction.unit().transpose();
    b(static_cast<int>(i)) = grouped_moments(hs[i]).mean;
  }
  return A.completeOrthogonalDecomposition().solve(b);
}

GridSpec resolve_grid(std::span<const Histogram> hs, GridSpec spec, double extent_sigmas) {
  if (hs.empty()) throw std::invalid_argument("no histograms");
  if (spec.center.isZero(0.0)) spec.center = fit_mean(hs);
  for (int ax = 0; ax < 3; ++ax) {
    if (spec.extent(ax) > 0.0) continue;
    std::size_t best = 0;
    double best_c = -1.0;
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const double c = std::abs(hs[i].direction.unit()(ax));
      if (c > best_c + 1e-12) {
        best_c = c;
        best = i;
      }
    }
    spec.extent(ax) = extent_sigmas * std::sqrt(grouped_moments(hs[best]).variance);
  }
  spec.validate();
  return spec;
}

WignerGrid reconstruct_3d(std::span<const Histogram> hs, const GridSpec& spec_in, const RadonOptions& opt) {
  if (hs.empty()) throw std::invalid_argument("no histograms");
  const GridSpec spec = resolve_grid(hs, spec_in, opt.extent_sigmas);
  const int n = spec.n_voxels;

  const Planes pl = group_planes(hs);
  std::vector<std::string> gaps;
  std::vector<long long> keys;
  std::map<long long, std::vector<double>> weights;
  for (const auto& [key, entries] : pl.entries) {
    int distinct = 0;
    weights[key] = entry_weights(entries, &distinct);
    keys.push_back(key);
    if (distinct < opt.min_angles_per_plane) {
      std::ostringstream s;
      s.precision(4);
      s << "phi=" << pl.phi.at(key) * 180.0 / kPi << "deg(" << distinct << " angles)";
      gaps.push_back(s.str());
    }
  }
  if (static_cast<int>(keys.size()) < opt.min_planes || !gaps.empty()) {
    std::ostringstream msg;
    msg << "insufficient angular coverage: " << keys.size() << " meridian planes (need " << opt.min_planes << ")";
    if (!gaps.empty()) {
      msg << "; undersampled planes:";
      for (const auto& g : gaps) msg << " " << g;
    }
    if (gaps.empty()) gaps.push_back("fewer than " + std::to_string(opt.min_planes) + " planes");
    throw CoverageGap(msg.str(), gaps);
  }

  std::vector<double> z(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) z[static_cast<std::size_t>(k)] = spec.coordinate(2, k);

  // Stage one: projections P_phi(u, z) of W along each plane normal.
  const int n_u = 4 * (n - 1) + 1;
  std::vector<double> plane_phi;
  std::vector<Eigen::MatrixXd> proj;
  std::vector<double> du;
  for (auto key : keys) {
    const double phi = pl.phi.at(key);
    const double eu = kPlaneMargin * (spec.extent(0) * std::abs(std::cos(phi)) + spec.extent(1) * std::abs(std::sin(phi)));
    const auto u = axis_coords(n_u, eu);
    plane_phi.push_back(phi);
    du.push_back(u[1] - u[0]);
    auto entries = pl.entries.at(key);
    const auto filtered = filter_entries(hs, entries, spec, opt.cutoff_fraction);
    proj.push_back(backproject_plane(entries, weights.at(key), filtered, u, z));
  }

  // Stage two: slice-wise FBP across planes.
  const auto wphi = angle_weights(plane_phi);
  WignerGrid grid;
  grid.spec = spec;
  grid.producer = "radon";
  grid.values.assign(static_cast<std::size_t>(n) * n * n, 0.0);
  std::vector<double> xs(static_cast<std::size_t>(n)), ys(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    xs[static_cast<std::size_t>(i)] = spec.coordinate(0, i);
    ys[static_cast<std::size_t>(i)] = spec.coordinate(1, i);
  }
  for (int k = 0; k < n; ++k) {
    for (std::size_t p = 0; p < plane_phi.size(); ++p) {
      std::vector<double> row(static_cast<std::size_t>(n_u));
      for (int a = 0; a < n_u; ++a) row[static_cast<std::size_t>(a)] = proj[p](a, k);
      Filtered f;
      f.ds = du[p];
      f.s0 = -0.5 * du[p] * (n_u - 1);
      f.q = ramp_hamming_filter(row, opt.cutoff_fraction, du[p]);
      const double c = std::cos(plane_phi[p]), s = std::sin(plane_phi[p]);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          grid.at(i, j, k) += wphi[p] * f(xs[static_cast<std::size_t>(i)] * c + ys[static_cast<std::size_t>(j)] * s);
        }
      }
    }
  }
  return grid;
}

Image2D reconstruct_meridian_plane(std::span<const Histogram> hs, double phi, const GridSpec& spec_in,
                                   const RadonOptions& opt) {
  const GridSpec spec = resolve_grid(hs, spec_in, opt.extent_sigmas);
  const double phi_p = plane_key(phi);
  const Vec3 ev(-std::sin(phi_p), std::cos(phi_p), 0.0);
  std::vector<Histogram> members;
  for (const auto& h : hs) {
    if (std::abs(h.direction.unit().dot(ev)) < 1e-7) members.push_back(h);
  }
  std::vector<PlaneEntry> entries;
  for (std::size_t i = 0; i < members.size(); ++i) entries.push_back(make_entry(i, members[i].direction.unit(), phi_p));
  int distinct = 0;
  const auto w = entry_weights(entries, &distinct);
  if (distinct < opt.min_angles_per_plane) {
    std::ostringstream s;
    s << "phi=" << phi_p * 180.0 / kPi << "deg(" << distinct << " angles)";
    throw CoverageGap("meridian plane is undersampled: " + s.str(), {s.str()});
  }
  const auto filtered = filter_entries(members, entries, spec, opt.cutoff_fraction);
  const int n = spec.n_voxels;
  const double eu = spec.extent(0) * std::abs(std::cos(phi_p)) + spec.extent(1) * std::abs(std::sin(phi_p));
  const auto u = axis_coords(n, eu);
  std::vector<double> z(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) z[static_cast<std::size_t>(k)] = spec.coordinate(2, k);
  Image2D img;
  img.values = backproject_plane(entries, w, filtered, u, z);
  img.a_coords = Eigen::Map<const Eigen::VectorXd>(u.data(), n);
  img.b_coords = Eigen::Map<const Eigen::VectorXd>(z.data(), n);
  img.a_label = "u";
  img.b_label = "J3";
  return img;
}

// ---------------------------------------------------------------------------

std::vector<Vec3> isocontour_points(const WignerGrid& grid, double level_fraction) {
  if (!(level_fraction > 0.0 && level_fraction < 1.0)) throw std::invalid_argument("level fraction must be in (0, 1)");
  const int n = grid.n();
  const auto it = std::max_element(grid.values.begin(), grid.values.end());
  const double vmax = *it;
  if (!(vmax > 0.0)) throw std::invalid_argument("grid has no positive maximum; level set is empty");
  const double level = level_fraction * vmax;
  const auto flat = static_cast<std::size_t>(it - grid.values.begin());
  const int i0 = static_cast<int>(flat / (static_cast<std::size_t>(n) * n));
  const int j0 = static_cast<int>((flat / n) % n);
  const int k0 = static_cast<int>(flat % n);

  std::vector<char> inside(grid.values.size(), 0);
  std::deque<std::array<int, 3>> queue{{i0, j0, k0}};
  inside[flat] = 1;
  const int step[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  std::vector<std::array<int, 3>> region;
  while (!queue.empty()) {
    const auto c = queue.front();
    queue.pop_front();
    region.push_back(c);
    for (const auto& s : step) {
      const int a = c[0] + s[0], b = c[1] + s[1], d = c[2] + s[2];
      if (a < 0 || b < 0 || d < 0 || a >= n || b >= n || d >= n) continue;
      const auto idx = grid.index(a, b, d);
      if (inside[idx] || grid.values[idx] < level) continue;
      inside[idx] = 1;
      queue.push_back({a, b, d});
    }
  }
  std::sort(region.begin(), region.end());

  std::vector<Vec3> pts;
  const Vec3 h(grid.spec.spacing(0), grid.spec.spacing(1), grid.spec.spacing(2));
  for (const auto& c : region) {
    const double vin = grid.at(c[0], c[1], c[2]);
    for (const auto& s : step) {
      const int a = c[0] + s[0], b = c[1] + s[1], d = c[2] + s[2];
      if (a < 0 || b < 0 || d < 0 || a >= n || b >= n || d >= n) continue;
      if (inside[grid.index(a, b, d)]) continue;
      const double vout = grid.at(a, b, d);
      double t;
      if (vout > 0.0 && vin > 0.0) {
        t = std::log(vin / level) / std::log(vin / vout);
      } else {
        t = (vin - level) / (vin - vout);
      }
      t = std::clamp(t, 0.0, 1.0);
      pts.emplace_back(grid.spec.coordinate(0, c[0]) + t * s[0] * h(0), grid.spec.coordinate(1, c[1]) + t * s[1] * h(1),
                       grid.spec.coordinate(2, c[2]) + t * s[2] * h(2));
    }
  }
  return pts;
}

EllipsoidFit isocontour_metrics(const WignerGrid& grid, double level_fraction) {
  const auto pts = isocontour_points(grid, level_fraction);
  if (pts.size() < 9) throw std::invalid_argument("level set too small for an ellipsoid fit");
  const int n = grid.n();
  const auto it = std::max_element(grid.values.begin(), grid.values.end());
  const auto flat = static_cast<std::size_t>(it - grid.values.begin());
  const Vec3 origin(grid.spec.coordinate(0, static_cast<int>(flat / (static_cast<std::size_t>(n) * n))),
                    grid.spec.coordinate(1, static_cast<int>((flat / n) % n)),
                    grid.spec.coordinate(2, static_cast<int>(flat % n)));
  const Vec3 h(grid.spec.spacing(0), grid.spec.spacing(1), grid.spec.spacing(2));

  // p^T A p + b^T p = 1 in voxel units about the maximum.
  Eigen::MatrixXd M(static_cast<int>(pts.size()), 9);
  for (std::size_t r = 0; r < pts.size(); ++r) {
    const Vec3 p = (pts[r] - origin).cwiseQuotient(h);
    M.row(static_cast<int>(r)) << p.x() * p.x(), p.y() * p.y(), p.z() * p.z(), 2 * p.x() * p.y(), 2 * p.x() * p.z(),
        2 * p.y() * p.z(), p.x(), p.y(), p.z();
  }
  const Eigen::VectorXd sol = M.colPivHouseholderQr().solve(Eigen::VectorXd::Ones(M.rows()));
  Mat3 A;
  A << sol(0), sol(3), sol(4), sol(3), sol(1), sol(5), sol(4), sol(5), sol(2);
  Vec3 b(sol(6), sol(7), sol(8));
  const Mat3 Hinv = h.cwiseInverse().asDiagonal();
  A = Hinv * A * Hinv;
  b = Hinv * b;
  const Vec3 c = -0.5 * A.ldlt().solve(b);
  const double rhs = 1.0 + c.dot(A * c);
  Eigen::SelfAdjointEigenSolver<Mat3> es(A);
  if (es.eigenvalues().minCoeff() <= 0.0 || !(rhs > 0.0)) {
    throw std::runtime_error("isocontour is not ellipsoidal");
  }
  EllipsoidFit fit;
  fit.center = origin + c;
  fit.level = level_fraction * *it;
  fit.max_value = *it;
  fit.n_points = static_cast<int>(pts.size());
  // ascending semi-axes = descending eigenvalues
  for (int a = 0; a < 3; ++a) {
    fit.semi_axes(a) = std::sqrt(rhs / es.eigenvalues()(2 - a));
    fit.axes.col(a) = es.eigenvectors().col(2 - a);
  }
  for (const auto& p : pts) {
    for (int ax = 0; ax < 3; ++ax) {
      if (std::abs(p(ax)) > grid.spec.extent(ax) - h(ax)) fit.touches_boundary = true;
    }
  }
  return fit;
}

}  // namespace polartomo
