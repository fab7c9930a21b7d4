#include "polartomo/forward_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <tuple>

#include <json.hpp>

namespace polartomo {

namespace {

double reduce_pi(double a) {
  double r = std::fmod(a, kPi);
  if (r < 0.0) r += kPi;
  if (r >= kPi) r = 0.0;
  return r;
}

// SplitMix64 finalizer; the stream is a pure function of its key.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t key(std::uint64_t seed, std::uint64_t dir, std::uint64_t counter) {
  return mix64(mix64(mix64(seed) ^ dir) ^ counter);
}

double to_unit_open(std::uint64_t x) { return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53; }

}  // namespace

WaveplateSetting WaveplateSetting::reduced() const { return {reduce_pi(alpha), reduce_pi(beta)}; }

Direction waveplate_to_direction(const WaveplateSetting& w) {
  return Direction::canonical(kPi / 2 - 2 * w.beta, 2 * w.beta - 4 * w.alpha);
}

WaveplateSetting direction_to_waveplate(const Direction& d) {
  const double beta = (kPi / 2 - d.theta) / 2;
  const double alpha = (2 * beta - d.phi) / 4;
  return WaveplateSetting{alpha, beta}.reduced();
}

void GaussianState::validate() const {
  if (!covariance.allFinite() || !mean.allFinite()) throw std::invalid_argument("state has non-finite entries");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("covariance is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(covariance, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10) {
    std::ostringstream msg;
    msg << "covariance is not positive semidefinite; eigenvalues " << es.eigenvalues().transpose();
    throw std::invalid_argument(msg.str());
  }
  if (mean_photons < 0.0) throw std::invalid_argument("mean photon number must be non-negative");
}

GaussianState preset_state(const std::string& name) {
  GaussianState s;
  s.name = name;
  if (name == "paper") {
    s.covariance << 309.20, -1.1931, -2.0160,
                    -1.1931, 0.44485, -1.2926e-2,
                    -2.0160, -1.2926e-2, 1.1511;
    s.mean_photons = 1e12;
    s.excitation_axis = Axis::J3;
  } else if (name == "coherent") {
    s.covariance.setIdentity();
    s.mean_photons = 1e12;
    s.excitation_axis = Axis::J3;
  } else if (name == "isotropic-squeezed") {
    s.covariance = Vec3(2.0, 1.0, 0.5).asDiagonal();
    s.mean_photons = 1e12;
    s.excitation_axis = Axis::J2;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "'");
  }
  return s;
}

std::vector<std::string> preset_names() { return {"paper", "coherent", "isotropic-squeezed"}; }

std::uint64_t Histogram::total() const {
  std::uint64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

void Histogram::validate() const {
  if (counts.size() < 1 || edges.size() != counts.size() + 1) {
    throw std::invalid_argument("histogram needs n_bins + 1 edges");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) throw std::invalid_argument("histogram edges must increase strictly");
  }
  if (total() > n_samples) throw std::invalid_argument("histogram counts exceed n_samples");
}

GroupedMoments grouped_moments(const Histogram& h) {
  GroupedMoments g;
  g.total = h.total();
  if (g.total == 0) throw std::invalid_argument("histogram is empty");
  const double n = static_cast<double>(g.total);
  double m = 0.0;
  for (int i = 0; i < h.n_bins(); ++i) m += static_cast<double>(h.counts[i]) * h.center(i);
  m /= n;
  double v = 0.0;
  for (int i = 0; i < h.n_bins(); ++i) {
    const double d = h.center(i) - m;
    v += static_cast<double>(h.counts[i]) * d * d;
  }
  g.mean = m;
  g.variance = v / n;
  return g;
}

std::vector<double> uniform_edges(double lo, double hi, int n_bins) {
  if (n_bins < 1 || !(hi > lo)) throw std::invalid_argument("bad histogram range");
  std::vector<double> e(static_cast<std::size_t>(n_bins) + 1);
  const double w = (hi - lo) / n_bins;
  for (int i = 0; i <= n_bins; ++i) e[static_cast<std::size_t>(i)] = lo + w * i;
  e.back() = hi;
  return e;
}

Projection1D gaussian_tomogram(const GaussianState& state, const Direction& dir) {
  const Vec3 n = dir.unit();
  return {n.dot(state.mean), n.dot(state.covariance * n)};
}

Histogram sample_histogram(const GaussianState& state, const Direction& dir, const SampleOptions& opt) {
  if (opt.n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (opt.n_bins < 2) throw std::invalid_argument("n_bins must be >= 2");
  if (opt.electronic_noise_variance < 0.0) throw std::invalid_argument("noise variance must be >= 0");
  const auto proj = gaussian_tomogram(state, dir);
  const double var = proj.variance + opt.electronic_noise_variance;
  if (!(var > 0.0)) throw DegenerateDistribution("projected variance is not positive");
  const double sd = std::sqrt(var);

  Histogram h;
  h.direction = dir;
  h.waveplate = direction_to_waveplate(dir);
  h.n_samples = opt.n_samples;
  h.seed = opt.seed;
  h.edges = uniform_edges(opt.lo, opt.hi, opt.n_bins);
  h.counts.assign(static_cast<std::size_t>(opt.n_bins), 0);
  const double scale = opt.n_bins / (opt.hi - opt.lo);

  auto deposit = [&](double x) {
    const double pos = (x - opt.lo) * scale;
    int b = pos < 0.0 ? 0 : (pos >= opt.n_bins ? opt.n_bins - 1 : static_cast<int>(pos));
    ++h.counts[static_cast<std::size_t>(b)];
  };
  // Box-Muller: each counter yields a pair of normals.
  const std::uint64_t n_pairs = (opt.n_samples + 1) / 2;
  for (std::uint64_t p = 0; p < n_pairs; ++p) {
    const double u1 = to_unit_open(key(opt.seed, opt.direction_index, 2 * p));
    const double u2 = to_unit_open(key(opt.seed, opt.direction_index, 2 * p + 1));
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * kPi * u2;
    deposit(proj.mean + sd * r * std::cos(a));
    if (2 * p + 1 < opt.n_samples) deposit(proj.mean + sd * r * std::sin(a));
  }
  return h;
}

Histogram expected_histogram(const GaussianState& state, const Direction& dir, const SampleOptions& opt) {
  if (opt.n_bins < 2) throw std::invalid_argument("n_bins must be >= 2");
  const auto proj = gaussian_tomogram(state, dir);
  const double var = proj.variance + opt.electronic_noise_variance;
  if (!(var > 0.0)) throw DegenerateDistribution("projected variance is not positive");
  const double sd = std::sqrt(var);
  auto cdf = [&](double x) { return 0.5 * std::erfc(-(x - proj.mean) / (sd * std::sqrt(2.0))); };
  Histogram h;
  h.direction = dir;
  h.waveplate = direction_to_waveplate(dir);
  h.seed = opt.seed;
  h.edges = uniform_edges(opt.lo, opt.hi, opt.n_bins);
  h.counts.assign(static_cast<std::size_t>(opt.n_bins), 0);
  const double n = static_cast<double>(opt.n_samples);
  std::uint64_t total = 0;
  for (int i = 0; i < opt.n_bins; ++i) {
    const double a = i == 0 ? 0.0 : cdf(h.edges[static_cast<std::size_t>(i)]);
    const double b = i == opt.n_bins - 1 ? 1.0 : cdf(h.edges[static_cast<std::size_t>(i) + 1]);
    h.counts[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(std::llround(std::max(b - a, 0.0) * n));
    total += h.counts[static_cast<std::size_t>(i)];
  }
  if (total == 0) throw std::invalid_argument("expected histogram is empty; increase n_samples");
  h.n_samples = total;
  return h;
}

std::pair<double, double> default_range(const GaussianState& state, std::span<const Direction> dirs) {
  if (dirs.empty()) throw std::invalid_argument("no directions");
  double sd_max = 0.0, m_lo = 0.0, m_hi = 0.0;
  bool first = true;
  for (const auto& d : dirs) {
    const auto p = gaussian_tomogram(state, d);
    sd_max = std::max(sd_max, std::sqrt(std::max(p.variance, 0.0)));
    m_lo = first ? p.mean : std::min(m_lo, p.mean);
    m_hi = first ? p.mean : std::max(m_hi, p.mean);
    first = false;
  }
  if (!(sd_max > 0.0)) throw DegenerateDistribution("all projected variances vanish");
  return {m_lo - 6.0 * sd_max, m_hi + 6.0 * sd_max};
}

std::vector<Direction> direction_grid(int n_theta, int n_phi, bool octant_only) {
  if (n_theta < 1 || n_phi < 1) throw std::invalid_argument("grid sizes must be >= 1");
  std::vector<Direction> out;
  out.reserve(static_cast<std::size_t>(n_theta) * n_phi);
  auto octant = [](int i, int n) { return n == 1 ? kPi / 4 : (kPi / 2) * i / (n - 1); };
  for (int i = 0; i < n_theta; ++i) {
    for (int k = 0; k < n_phi; ++k) {
      if (octant_only) {
        out.push_back({octant(i, n_theta), octant(k, n_phi)});
      } else {
        out.push_back({kPi * (i + 0.5) / n_theta, 2.0 * kPi * k / n_phi});
      }
    }
  }
  return out;
}

std::vector<Direction> reduced_scan() {
  const double r = 1.0 / std::sqrt(2.0);
  const Vec3 vs[] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {r, r, 0}, {r, -r, 0},
                     {r, 0, r}, {r, 0, -r}, {0, r, r}, {0, r, -r}};
  std::vector<Direction> out;
  for (const auto& v : vs) out.push_back(Direction::from_vector(v));
  return out;
}

std::vector<Histogram> expand_by_symmetry(std::span<const Histogram> octant, bool dedup) {
  constexpr double tol = 1e-9;
  for (const auto& h : octant) {
    const auto& d = h.direction;
    if (d.theta < -tol || d.theta > kPi / 2 + tol || d.phi < -tol || d.phi > kPi / 2 + tol) {
      throw std::invalid_argument("direction outside the first octant");
    }
  }
  std::vector<Histogram> out;
  std::map<std::tuple<long long, long long, long long>, bool> seen;
  auto rounded = [](const Vec3& v) {
    auto r = [](double x) { return std::llround(x * 1e8); };
    return std::make_tuple(r(v.x()), r(v.y()), r(v.z()));
  };
  for (int s = 0; s < 8; ++s) {
    const Vec3 sign((s & 1) ? -1.0 : 1.0, (s & 2) ? -1.0 : 1.0, (s & 4) ? -1.0 : 1.0);
    for (const auto& h : octant) {
      const Vec3 v = h.direction.unit().cwiseProduct(sign);
      if (dedup && !seen.emplace(rounded(v), true).second) continue;
      Histogram m = h;
      m.direction = s == 0 ? h.direction : Direction::from_vector(v);
      m.waveplate = direction_to_waveplate(m.direction);
      out.push_back(std::move(m));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string state_to_json(const GaussianState& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["mean"] = {s.mean.x(), s.mean.y(), s.mean.z()};
  j["mean_photons"] = s.mean_photons;
  j["excitation_axis"] = axis_name(s.excitation_axis);
  nlohmann::json g = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) g.push_back({s.covariance(r, 0), s.covariance(r, 1), s.covariance(r, 2)});
  j["covariance"] = g;
  return j.dump();
}

GaussianState state_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  GaussianState s;
  s.name = j.value("name", "");
  const auto& m = j.at("mean");
  s.mean = Vec3(m.at(0).get<double>(), m.at(1).get<double>(), m.at(2).get<double>());
  s.mean_photons = j.value("mean_photons", 0.0);
  s.excitation_axis = axis_from_string(j.value("excitation_axis", "J2"));
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) s.covariance(r, c) = j.at("covariance").at(r).at(c).get<double>();
  }
  return s;
}

namespace {

constexpr char kMagic[4] = {'P', 'T', 'H', 'S'};

template <typename T>
void put(std::vector<char>& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

struct Reader {
  std::span<const char> bytes;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > bytes.size()) throw std::runtime_error("histogram set is truncated");
    T v;
    std::memcpy(&v, bytes.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string str(std::size_t n) {
    if (pos + n > bytes.size()) throw std::runtime_error("histogram set is truncated");
    std::string s(bytes.data() + pos, n);
    pos += n;
    return s;
  }
};

bool edges_are_uniform(const std::vector<double>& e) {
  const auto u = uniform_edges(e.front(), e.back(), static_cast<int>(e.size()) - 1);
  return std::memcmp(u.data(), e.data(), e.size() * sizeof(double)) == 0;
}

}  // namespace

std::vector<char> encode_histogram_set(const HistogramSet& set) {
  nlohmann::json meta;
  meta["format_version"] = kHistogramSetVersion;
  meta["units"] = set.units;
  meta["shot_noise_variance"] = set.shot_noise_variance;
  meta["global_seed"] = set.global_seed;
  meta["state"] = nlohmann::json::parse(set.state_json);
  meta["manifest"] = nlohmann::json::parse(set.manifest_json);
  meta["manifest_hash"] = set.manifest_hash;
  meta["n_records"] = set.records.size();
  const std::string text = meta.dump();

  std::vector<char> buf(kMagic, kMagic + 4);
  put<std::uint32_t>(buf, kHistogramSetVersion);
  put<std::uint64_t>(buf, text.size());
  buf.insert(buf.end(), text.begin(), text.end());
  for (const auto& h : set.records) {
    h.validate();
    put<double>(buf, h.direction.theta);
    put<double>(buf, h.direction.phi);
    put<double>(buf, h.waveplate.alpha);
    put<double>(buf, h.waveplate.beta);
    put<std::uint64_t>(buf, h.n_samples);
    put<std::uint64_t>(buf, h.seed);
    put<double>(buf, h.shot_noise_variance);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(h.counts.size()));
    const bool uniform = edges_are_uniform(h.edges);
    put<std::uint8_t>(buf, uniform ? 0 : 1);
    if (uniform) {
      put<double>(buf, h.edges.front());
      put<double>(buf, h.edges.back());
    } else {
      for (double e : h.edges) put<double>(buf, e);
    }
    const bool narrow = std::all_of(h.counts.begin(), h.counts.end(), [](std::uint64_t c) { return c <= 0xffffffffULL; });
    put<std::uint8_t>(buf, narrow ? 4 : 8);
    for (auto c : h.counts) {
      if (narrow) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(c));
      } else {
        put<std::uint64_t>(buf, c);
      }
    }
  }
  return buf;
}

HistogramSet decode_histogram_set(std::span<const char> bytes) {
  Reader rd{bytes};
  if (rd.str(4) != std::string(kMagic, 4)) throw std::runtime_error("not a histogram set file");
  const auto version = rd.get<std::uint32_t>();
  if (version != kHistogramSetVersion) {
    throw std::runtime_error("unsupported histogram set version " + std::to_string(version));
  }
  const auto meta = nlohmann::json::parse(rd.str(rd.get<std::uint64_t>()));
  HistogramSet set;
  set.units = meta.at("units").get<std::string>();
  set.shot_noise_variance = meta.at("shot_noise_variance").get<double>();
  set.global_seed = meta.at("global_seed").get<std::uint64_t>();
  set.state_json = meta.at("state").dump();
  set.manifest_json = meta.at("manifest").dump();
  set.manifest_hash = meta.at("manifest_hash").get<std::string>();
  const auto n = meta.at("n_records").get<std::size_t>();
  set.records.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    Histogram h;
    h.direction.theta = rd.get<double>();
    h.direction.phi = rd.get<double>();
    h.waveplate.alpha = rd.get<double>();
    h.waveplate.beta = rd.get<double>();
    h.n_samples = rd.get<std::uint64_t>();
    h.seed = rd.get<std::uint64_t>();
    h.shot_noise_variance = rd.get<double>();
    const auto nb = rd.get<std::uint32_t>();
    if (rd.get<std::uint8_t>() == 0) {
      const double lo = rd.get<double>();
      const double hi = rd.get<double>();
      h.edges = uniform_edges(lo, hi, static_cast<int>(nb));
    } else {
      h.edges.resize(nb + 1);
      for (auto& e : h.edges) e = rd.get<double>();
    }
    const auto width = rd.get<std::uint8_t>();
    h.counts.resize(nb);
    for (auto& c : h.counts) c = width == 4 ? rd.get<std::uint32_t>() : rd.get<std::uint64_t>();
    set.records.push_back(std::move(h));
  }
  if (rd.pos != bytes.size()) throw std::runtime_error("trailing bytes in histogram set");
  return set;
}

void write_histogram_set(const std::string& path, const HistogramSet& set) {
  const auto buf = encode_histogram_set(set);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

HistogramSet read_histogram_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_histogram_set(buf);
}

}  // namespace polartomo
