#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "polartomo/analysis.hpp"
#include "polartomo/gaussian_fit.hpp"
#include "polartomo/ml_em.hpp"
#include "polartomo/radon.hpp"

namespace polartomo::cli {

namespace {

const double kInvE = std::exp(-1.0);

Json grid_defaults() {
  return {{"voxels", 65}, {"extent", 0.0}, {"extent_sigmas", 4.0}, {"center", nullptr}};
}

Json fit_defaults() {
  return {{"confidence", 3.0}, {"error_model", "weighted"}, {"tol", 1e-12}, {"max_iter", 200}, {"sheppard", true}};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Json vec_json(const Vec3& v) { return Json::array({v(0), v(1), v(2)}); }

Json mat_json(const Mat3& m) {
  Json out = Json::array();
  for (int i = 0; i < 3; ++i) out.push_back(Json::array({m(i, 0), m(i, 1), m(i, 2)}));
  return out;
}

Mat3 mat_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("covariance must be a 3x3 array");
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_array() || j[i].size() != 3) throw std::invalid_argument("covariance must be a 3x3 array");
    for (int k = 0; k < 3; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

Vec3 vec_from_json(const Json& j, const char* what) {
  if (j.is_number()) return Vec3::Constant(j.get<double>());
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(std::string(what) + " must be a number or 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

const std::string& require_path(const Json& cfg, const char* key) {
  const auto& p = cfg.at(key).get_ref<const std::string&>();
  if (p.empty()) throw std::invalid_argument(std::string("--") + key + " is required for " + cfg.at("command").get<std::string>());
  return p;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_report(const std::string& path, Json report, const Manifest& m) {
  report["format_version"] = kFormatVersion;
  report["manifest_hash"] = m.hash;
  report["manifest"] = m.body;
  write_text(path, report.dump(2) + "\n");
}

GridSpec grid_from_config(const Json& g) {
  GridSpec s;
  s.n_voxels = g.at("voxels").get<int>();
  s.extent = vec_from_json(g.at("extent"), "grid.extent");
  if (!g.at("center").is_null()) s.center = vec_from_json(g.at("center"), "grid.center");
  return s;
}

ConfidenceSpec confidence_from_config(double c) {
  if (!(c > 0.0)) throw std::invalid_argument("confidence must be positive");
  if (c < 1.0) return ConfidenceSpec::from_level(c);
  ConfidenceSpec s;
  s.sigma_multiplier = c;
  return s;
}

FitOptions fit_options(const Json& f) {
  FitOptions o;
  o.confidence = confidence_from_config(f.at("confidence").get<double>());
  const auto model = f.at("error_model").get<std::string>();
  if (model == "weighted") o.errors = ErrorModel::Weighted;
  else if (model == "literal") o.errors = ErrorModel::Literal;
  else throw std::invalid_argument("fit.error_model must be weighted or literal, got " + model);
  o.tol = f.at("tol").get<double>();
  o.max_iter = f.at("max_iter").get<int>();
  return o;
}

struct Loaded {
  HistogramSet set;
  std::vector<Histogram> records;
  bool expanded = false;
  bool selected = false;
};

Loaded load_records(const Json& cfg, bool expand_octant) {
  Loaded l;
  l.set = read_histogram_set(require_path(cfg, "in"));
  l.records = l.set.records;
  if (l.records.empty()) throw std::invalid_argument("histogram set has no records");
  const std::string sel = cfg.contains("directions") ? cfg.at("directions").get<std::string>() : "all";
  if (sel != "all" && sel != "reduced") throw std::invalid_argument("directions must be all or reduced, got " + sel);
  const bool octant = covers_one_octant(l.records);
  if (octant && (expand_octant || sel == "reduced")) {
    l.records = expand_by_symmetry(l.records);
    l.expanded = true;
  }
  if (sel == "reduced") {
    l.records = select_directions(l.records, reduced_scan());
    l.selected = true;
  }
  return l;
}

std::vector<std::pair<std::string, std::string>> input_list(const std::string& path, const std::string& hash) {
  return {{path, hash}};
}

Json moments_json(const WignerGrid& g) {
  const auto m = grid_moments(g);
  Eigen::SelfAdjointEigenSolver<Mat3> es(m.covariance);
  return {{"integral", g.integral()},
          {"mean", vec_json(m.mean)},
          {"covariance", mat_json(m.covariance)},
          {"principal_variances", vec_json(es.eigenvalues())}};
}

Json fit_json(const CovarianceFit& f, const std::vector<VarianceRecord>& recs) {
  Json iv = Json::array();
  for (const auto& i : f.errors.intervals) iv.push_back({{"lo", i.lo}, {"hi", i.hi}, {"half_width", i.half_width}});
  Json res = Json::array();
  for (std::size_t i = 0; i < recs.size(); ++i)
    res.push_back({{"theta", recs[i].direction.theta},
                   {"phi", recs[i].direction.phi},
                   {"variance", recs[i].sample_variance},
                   {"stderr", recs[i].variance_stderr},
                   {"residual", f.residuals[i]}});
  return {{"G", mat_json(f.g)},
          {"mean", vec_json(f.mean)},
          {"principal_variances", vec_json(f.principal_variances)},
          {"principal_axes", mat_json(f.principal_axes)},
          {"standard_errors", vec_json(f.errors.standard_errors)},
          {"intervals", iv},
          {"confidence_level", f.confidence.level()},
          {"sigma_multiplier", f.confidence.sigma_multiplier},
          {"error_model", f.errors.model == ErrorModel::Weighted ? "weighted" : "literal"},
          {"pseudo_inverse_flagged", f.errors.pseudo_inverse_flagged},
          {"misalignment_deg", f.misalignment_deg},
          {"axis_misalignment_deg", vec_json(f.axis_misalignment_deg)},
          {"iterations", f.iterations},
          {"gradient_norm", f.gradient_norm},
          {"log_likelihood", f.log_likelihood.empty() ? 0.0 : f.log_likelihood.back()},
          {"records", res}};
}

std::pair<CovarianceFit, std::vector<VarianceRecord>> run_fit(const std::vector<Histogram>& hs, const Json& f) {
  std::vector<VarianceRecord> recs;
  recs.reserve(hs.size());
  const bool sheppard = f.at("sheppard").get<bool>();
  for (const auto& h : hs) recs.push_back(extract_variance(h, sheppard));
  return {fit_covariance(recs, fit_options(f)), recs};
}

Json image_json(const Image2D& img) {
  const auto m = image_moments(img);
  return {{"axes", Json::array({img.a_label, img.b_label})},
          {"integral", img.integral()},
          {"mean", Json::array({m.mean(0), m.mean(1)})},
          {"covariance", Json::array({Json::array({m.covariance(0, 0), m.covariance(0, 1)}),
                                      Json::array({m.covariance(1, 0), m.covariance(1, 1)})})},
          {"warnings", img.warnings}};
}

void check_keys(const Json& base, const Json& over, const std::string& where) {
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!base.contains(it.key())) throw std::invalid_argument("unknown configuration key: " + key);
    const auto& b = base.at(it.key());
    if (b.is_object() && it.value().is_object()) check_keys(b, it.value(), key);
  }
}

}  // namespace

Json default_config(const std::string& command) {
  Json c = {{"command", command}, {"format_version", kFormatVersion}, {"in", ""}, {"out", ""}, {"seed", 1}};
  if (command == "simulate") {
    c["state"] = {{"preset", "paper"},
                  {"covariance", nullptr},
                  {"mean", nullptr},
                  {"mean_photons", nullptr},
                  {"excitation_axis", nullptr}};
    c["scan"] = {{"kind", "reduced"}, {"n_theta", 90}, {"n_phi", 90}, {"directions", Json::array()}, {"with_reduced", false}};
    c["sampling"] = {{"mode", "sampled"},
                     {"samples", 100000},
                     {"bins", 751},
                     {"range", nullptr},
                     {"electronic_noise_variance", 0.0}};
  } else if (command == "radon") {
    c["grid"] = grid_defaults();
    c["filter"] = {{"cutoff", 0.8}};
    c["symmetry"] = "auto";
    c["isocontour_level"] = kInvE;
  } else if (command == "em") {
    c["grid"] = grid_defaults();
    c["em"] = {{"tol", 1e-9}, {"max_iter", 1000}};
    c["directions"] = "all";
    c["symmetry"] = "off";
  } else if (command == "gauss") {
    c["fit"] = fit_defaults();
    c["directions"] = "all";
  } else if (command == "analyze") {
    c["fit"] = fit_defaults();
    c["directions"] = "all";
    c["filter"] = {{"cutoff", 0.8}};
    c["grid"] = "";
    c["mean_axis"] = nullptr;
    c["alpha"] = 0.05;
  } else if (command == "export") {
    c["what"] = "voxels";
    c["level"] = kInvE;
    c["axis"] = "J2";
    c["index"] = -1;
  } else {
    throw std::invalid_argument("unknown command: " + command);
  }
  return c;
}

Json merge_config(const Json& base, const Json& overrides) {
  if (!overrides.is_object()) throw std::invalid_argument("configuration must be a JSON object");
  check_keys(base, overrides, "");
  Json out = base;
  out.merge_patch(overrides);
  // merge_patch deletes keys set to null; restore them so the manifest lists every field
  for (auto it = base.begin(); it != base.end(); ++it) {
    if (!out.contains(it.key())) out[it.key()] = nullptr;
    if (it.value().is_object() && out[it.key()].is_object())
      for (auto jt = it.value().begin(); jt != it.value().end(); ++jt)
        if (!out[it.key()].contains(jt.key())) out[it.key()][jt.key()] = nullptr;
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Manifest make_manifest(const Json& config, const std::vector<std::pair<std::string, std::string>>& inputs) {
  Manifest m;
  Json in = Json::array();
  for (const auto& [p, h] : inputs) in.push_back({{"path", p}, {"manifest_hash", h}});
  m.body = {{"program", "polartomo"},
            {"format_version", kFormatVersion},
            {"command", config.at("command")},
            {"config", config},
            {"inputs", in}};
  m.hash = hex64(fnv1a64(m.body.dump()));
  return m;
}

GaussianState state_from_config(const Json& s) {
  GaussianState st;
  if (!s.at("preset").is_null()) st = preset_state(s.at("preset").get<std::string>());
  if (!s.at("covariance").is_null()) {
    st.covariance = mat_from_json(s.at("covariance"));
    st.name = "custom";
  }
  if (!s.at("mean").is_null()) st.mean = vec_from_json(s.at("mean"), "state.mean");
  if (!s.at("mean_photons").is_null()) st.mean_photons = s.at("mean_photons").get<double>();
  if (!s.at("excitation_axis").is_null()) st.excitation_axis = axis_from_string(s.at("excitation_axis").get<std::string>());
  st.validate();
  return st;
}

std::vector<Direction> scan_from_config(const Json& scan) {
  const auto kind = scan.at("kind").get<std::string>();
  std::vector<Direction> out;
  if (kind == "reduced") {
    return reduced_scan();
  } else if (kind == "octant") {
    out = direction_grid(scan.at("n_theta").get<int>(), scan.at("n_phi").get<int>(), true);
  } else if (kind == "sphere") {
    out = direction_grid(scan.at("n_theta").get<int>(), scan.at("n_phi").get<int>(), false);
  } else if (kind == "list") {
    for (const auto& d : scan.at("directions")) {
      if (!d.is_array() || d.size() != 2) throw std::invalid_argument("scan.directions entries are [theta, phi] in radians");
      out.push_back(Direction::canonical(d[0].get<double>(), d[1].get<double>()));
    }
    if (out.empty()) throw std::invalid_argument("scan.directions is empty");
  } else {
    throw std::invalid_argument("scan.kind must be reduced, octant, sphere or list, got " + kind);
  }
  if (scan.at("with_reduced").get<bool>()) {
    for (const auto& r : reduced_scan()) {
      const Vec3 t = r.unit();
      const bool present =
          std::any_of(out.begin(), out.end(), [&](const Direction& d) { return std::abs(d.unit().dot(t)) > 1.0 - 1e-9; });
      if (!present) out.push_back(r);
    }
  }
  return out;
}

bool covers_one_octant(const std::vector<Histogram>& hs) {
  const double eps = 1e-9;
  for (const auto& h : hs) {
    const Vec3 n = h.direction.unit();
    if ((n.array() < -eps).any()) return false;
  }
  return !hs.empty();
}

std::vector<Histogram> select_directions(const std::vector<Histogram>& hs, const std::vector<Direction>& dirs) {
  std::vector<Histogram> out;
  std::vector<std::string> missing;
  for (const auto& d : dirs) {
    const Vec3 t = d.unit();
    const Histogram* hit = nullptr;
    for (const auto& h : hs) {
      if (std::abs(h.direction.unit().dot(t)) > 1.0 - 1e-9) {
        hit = &h;
        break;
      }
    }
    if (hit) {
      out.push_back(*hit);
    } else {
      missing.push_back("(" + num(d.theta) + ", " + num(d.phi) + ")");
    }
  }
  if (!missing.empty()) {
    std::string msg = "dataset lacks directions:";
    for (const auto& m : missing) msg += " " + m;
    throw std::invalid_argument(msg);
  }
  return out;
}

Outcome cmd_simulate(const Json& cfg, std::ostream& log) {
  const auto& out_path = require_path(cfg, "out");
  const GaussianState st = state_from_config(cfg.at("state"));
  const auto dirs = scan_from_config(cfg.at("scan"));
  const auto& smp = cfg.at("sampling");
  const auto mode = smp.at("mode").get<std::string>();
  if (mode != "sampled" && mode != "expected") throw std::invalid_argument("sampling.mode must be sampled or expected");
  double lo, hi;
  if (smp.at("range").is_null()) {
    std::tie(lo, hi) = default_range(st, dirs);
  } else {
    lo = smp.at("range").at(0).get<double>();
    hi = smp.at("range").at(1).get<double>();
    if (!(hi > lo)) throw std::invalid_argument("sampling.range must be [lo, hi] with hi > lo");
  }
  const auto m = make_manifest(cfg, {});
  HistogramSet set;
  set.global_seed = cfg.at("seed").get<std::uint64_t>();
  set.state_json = state_to_json(st);
  set.manifest_json = m.body.dump();
  set.manifest_hash = m.hash;
  set.records.reserve(dirs.size());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    SampleOptions o;
    o.n_samples = smp.at("samples").get<std::uint64_t>();
    o.n_bins = smp.at("bins").get<int>();
    o.lo = lo;
    o.hi = hi;
    o.seed = set.global_seed;
    o.direction_index = i;
    o.electronic_noise_variance = smp.at("electronic_noise_variance").get<double>();
    set.records.push_back(mode == "sampled" ? sample_histogram(st, dirs[i], o) : expected_histogram(st, dirs[i], o));
  }
  write_histogram_set(out_path, set);
  log << "simulate: " << set.records.size() << " records (" << mode << ") -> " << out_path << "\n";
  return {{out_path},
          {{"records", set.records.size()}, {"range", Json::array({lo, hi})}, {"manifest_hash", m.hash}}};
}

Outcome cmd_radon(const Json& cfg, std::ostream& log) {
  const auto& out_path = require_path(cfg, "out");
  const auto sym = cfg.at("symmetry").get<std::string>();
  if (sym != "auto" && sym != "off") throw std::invalid_argument("symmetry must be auto or off");
  auto l = load_records(cfg, sym == "auto");
  const auto m = make_manifest(cfg, input_list(cfg.at("in"), l.set.manifest_hash));
  RadonOptions opt;
  opt.cutoff_fraction = cfg.at("filter").at("cutoff").get<double>();
  opt.extent_sigmas = cfg.at("grid").at("extent_sigmas").get<double>();
  const GridSpec spec = resolve_grid(l.records, grid_from_config(cfg.at("grid")), opt.extent_sigmas);
  if (l.expanded) log << "radon: octant input expanded to " << l.records.size() << " directions\n";
  auto grid = reconstruct_3d(l.records, spec, opt);
  grid.manifest_hash = m.hash;
  write_wigner_grid(out_path, grid);

  const double level = cfg.at("isocontour_level").get<double>();
  const auto e = isocontour_metrics(grid, level);
  const double s2 = -2.0 * std::log(level);
  Json report = {{"grid",
                  {{"n_voxels", spec.n_voxels}, {"extent", vec_json(spec.extent)}, {"center", vec_json(spec.center)}}},
                 {"directions_used", l.records.size()},
                 {"symmetry_expanded", l.expanded},
                 {"filter_cutoff", opt.cutoff_fraction},
                 {"moments", moments_json(grid)},
                 {"isocontour",
                  {{"level_fraction", level},
                   {"center", vec_json(e.center)},
                   {"semi_axes", vec_json(e.semi_axes)},
                   {"axes", mat_json(e.axes)},
                   {"implied_variances", vec_json(e.semi_axes.array().square() / s2)},
                   {"n_points", e.n_points},
                   {"touches_boundary", e.touches_boundary}}}};
  const std::string rpath = out_path + ".report.json";
  write_report(rpath, report, m);
  log << "radon: semi-axes " << e.semi_axes.transpose() << " -> " << out_path << "\n";
  return {{out_path, rpath}, report};
}

Outcome cmd_em(const Json& cfg, std::ostream& log) {
  const auto& out_path = require_path(cfg, "out");
  const auto sym = cfg.at("symmetry").get<std::string>();
  if (sym != "auto" && sym != "off") throw std::invalid_argument("symmetry must be auto or off");
  auto l = load_records(cfg, sym == "auto");
  const auto m = make_manifest(cfg, input_list(cfg.at("in"), l.set.manifest_hash));
  const GridSpec spec =
      resolve_grid(l.records, grid_from_config(cfg.at("grid")), cfg.at("grid").at("extent_sigmas").get<double>());
  const auto sys = build_system_matrix(l.records, spec, l.set.units);
  EmOptions opt;
  opt.tol = cfg.at("em").at("tol").get<double>();
  opt.max_iter = cfg.at("em").at("max_iter").get<int>();
  log << "em: " << l.records.size() << " directions, " << sys.rows() << " x " << sys.cols() << ", nnz "
      << sys.c.nonZeros() << "\n";
  auto r = em_reconstruct(measured_vector(l.records), sys, {}, opt);
  r.grid.manifest_hash = m.hash;
  write_wigner_grid(out_path, r.grid);

  std::ostringstream csv;
  csv << "# polartomo-em-log\n# format_version " << kFormatVersion << "\n# manifest_hash " << m.hash << "\n";
  csv << "iteration,kl\n";
  for (std::size_t i = 0; i < r.state.history.size(); ++i) csv << i << "," << num(r.state.history[i]) << "\n";
  const std::string lpath = out_path + ".log.csv";
  write_text(lpath, csv.str());

  Json report = {{"grid",
                  {{"n_voxels", spec.n_voxels}, {"extent", vec_json(spec.extent)}, {"center", vec_json(spec.center)}}},
                 {"directions_used", l.records.size()},
                 {"symmetry_expanded", l.expanded},
                 {"converged", r.converged},
                 {"iterations", r.state.iteration},
                 {"kl", r.state.kl},
                 {"floored_voxels", r.state.floored},
                 {"moments", moments_json(r.grid)}};
  const std::string rpath = out_path + ".report.json";
  write_report(rpath, report, m);
  log << "em: " << r.state.iteration << " iterations, kl " << r.state.kl << (r.converged ? "" : " (not converged)")
      << " -> " << out_path << "\n";
  return {{out_path, lpath, rpath}, report};
}

Outcome cmd_gauss(const Json& cfg, std::ostream& log) {
  const auto& out_path = require_path(cfg, "out");
  auto l = load_records(cfg, false);
  const auto m = make_manifest(cfg, input_list(cfg.at("in"), l.set.manifest_hash));
  const auto [fit, recs] = run_fit(l.records, cfg.at("fit"));
  Json report = fit_json(fit, recs);
  report["directions_used"] = l.records.size();
  write_report(out_path, report, m);
  log << "gauss: principal variances " << fit.principal_variances.transpose() << " -> " << out_path << "\n";
  return {{out_path}, report};
}

Outcome cmd_analyze(const Json& cfg, std::ostream& log) {
  const auto& out_path = require_path(cfg, "out");
  auto l = load_records(cfg, false);
  const std::string grid_path = cfg.at("grid").get<std::string>();
  WignerGrid grid;
  std::vector<std::pair<std::string, std::string>> inputs = input_list(cfg.at("in"), l.set.manifest_hash);
  if (!grid_path.empty()) {
    grid = read_wigner_grid(grid_path);
    inputs.emplace_back(grid_path, grid.manifest_hash);
  }
  const auto m = make_manifest(cfg, inputs);

  const Json state = Json::parse(l.set.state_json);
  Axis mean_axis;
  double photons = 0.0;
  if (!cfg.at("mean_axis").is_null()) {
    mean_axis = axis_from_string(cfg.at("mean_axis").get<std::string>());
  } else if (state.is_object() && state.contains("excitation_axis")) {
    mean_axis = axis_from_string(state.at("excitation_axis").get<std::string>());
  } else {
    throw std::invalid_argument("dataset carries no state description; pass --mean-axis");
  }
  if (state.is_object() && state.contains("mean_photons")) photons = state.at("mean_photons").get<double>();

  const auto [fit, recs] = run_fit(l.records, cfg.at("fit"));
  const auto sq = squeezing_report(fit.g, mean_axis, photons);
  Json report;
  report["fit"] = fit_json(fit, recs);
  report["fit"].erase("records");
  report["squeezing"] = {{"mean_axis", axis_name(sq.mean_axis)},
                         {"mean_photons", sq.mean_photons},
                         {"theta_sq", sq.theta_sq},
                         {"theta_antisq", sq.theta_antisq},
                         {"theta_indeterminate", sq.theta_indeterminate},
                         {"var_sq", sq.var_sq},
                         {"var_antisq", sq.var_antisq},
                         {"squeezing_db", sq.squeezing_db},
                         {"antisqueezing_db", sq.antisqueezing_db},
                         {"is_polarization_squeezed", sq.is_polarization_squeezed}};

  const double alpha = cfg.at("alpha").get<double>();
  Json per = Json::array();
  int tested = 0, ks_ok = 0, chi_ok = 0, both_ok = 0;
  for (const auto& h : l.set.records) {
    const auto g = gaussianity_tests(h);
    per.push_back({{"theta", h.direction.theta},
                   {"phi", h.direction.phi},
                   {"n", g.n},
                   {"ks_stat", g.ks_stat},
                   {"ks_p", g.ks_done ? Json(g.ks_p) : Json()},
                   {"chi2_stat", g.chi2_stat},
                   {"chi2_dof", g.chi2_dof},
                   {"chi2_p", g.chi2_done ? Json(g.chi2_p) : Json()},
                   {"kl_to_best_gaussian", g.kl_to_best_gaussian},
                   {"notes", g.notes}});
    if (!g.ks_done || !g.chi2_done) continue;
    ++tested;
    ks_ok += g.ks_p >= alpha;
    chi_ok += g.chi2_p >= alpha;
    both_ok += g.ks_p >= alpha && g.chi2_p >= alpha;
  }
  report["gaussianity"] = {{"alpha", alpha},
                           {"tested", tested},
                           {"ks_accept_fraction", tested ? double(ks_ok) / tested : 0.0},
                           {"chi2_accept_fraction", tested ? double(chi_ok) / tested : 0.0},
                           {"both_accept_fraction", tested ? double(both_ok) / tested : 0.0},
                           {"records", per}};

  if (!grid_path.empty()) {
    std::vector<Histogram> full = l.set.records;
    if (covers_one_octant(full)) full = expand_by_symmetry(full);
    RadonOptions opt;
    opt.cutoff_fraction = cfg.at("filter").at("cutoff").get<double>();
    const auto projected = project_wigner_along_axis(grid, Axis::J2);
    const auto direct = reconstruct_meridian_plane(full, 0.0, grid.spec, opt);
    const auto mp = image_moments(projected), md = image_moments(direct);
    report["dark_plane"] = {
        {"projection_axis", "J2"},
        {"plane", "J1-J3 (meridian phi = 0)"},
        {"projected_3d", image_json(projected)},
        {"direct_2d", image_json(direct)},
        {"mean_abs_diff", Json::array({std::abs(mp.mean(0) - md.mean(0)), std::abs(mp.mean(1) - md.mean(1))})},
        {"variance_rel_diff",
         Json::array({std::abs(mp.covariance(0, 0) / md.covariance(0, 0) - 1.0),
                      std::abs(mp.covariance(1, 1) / md.covariance(1, 1) - 1.0)})}};
  }
  write_report(out_path, report, m);
  log << "analyze: squeezing " << sq.squeezing_db << " dB, gaussianity " << both_ok << "/" << tested << " accepted -> "
      << out_path << "\n";
  return {{out_path}, report};
}

Outcome cmd_export(const Json& cfg, std::ostream& log) {
  const auto& in_path = require_path(cfg, "in");
  const auto& out_path = require_path(cfg, "out");
  const auto grid = read_wigner_grid(in_path);
  const auto m = make_manifest(cfg, input_list(in_path, grid.manifest_hash));
  const auto what = cfg.at("what").get<std::string>();
  const int n = grid.n();

  std::ostringstream o;
  o << "# polartomo-export " << what << "\n# format_version " << kFormatVersion << "\n# manifest_hash " << m.hash
    << "\n# source " << (grid.producer.empty() ? "-" : grid.producer) << " "
    << (grid.manifest_hash.empty() ? "-" : grid.manifest_hash) << "\n# coordinates relative to center " << num(grid.spec.center(0))
    << " " << num(grid.spec.center(1)) << " " << num(grid.spec.center(2)) << "\n";
  std::size_t rows = 0;
  if (what == "voxels") {
    o << "# J1 J2 J3 W\n";
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k, ++rows)
          o << num(grid.spec.coordinate(0, i)) << " " << num(grid.spec.coordinate(1, j)) << " "
            << num(grid.spec.coordinate(2, k)) << " " << num(grid.at(i, j, k)) << "\n";
  } else if (what == "isocontour") {
    const double level = cfg.at("level").get<double>();
    o << "# level_fraction " << num(level) << "\n# J1 J2 J3\n";
    for (const auto& p : isocontour_points(grid, level)) {
      o << num(p(0)) << " " << num(p(1)) << " " << num(p(2)) << "\n";
      ++rows;
    }
  } else if (what == "slice" || what == "projection") {
    const Axis axis = axis_from_string(cfg.at("axis").get<std::string>());
    const int ax = axis_index(axis);
    Image2D img;
    if (what == "projection") {
      img = project_wigner_along_axis(grid, axis);
    } else {
      int idx = cfg.at("index").get<int>();
      if (idx < 0) idx = n / 2;
      if (idx >= n) throw std::invalid_argument("slice index out of range 0.." + std::to_string(n - 1));
      const int a_ax = ax == 0 ? 1 : 0, b_ax = ax == 2 ? 1 : 2;
      img.values.resize(n, n);
      img.a_coords.resize(n);
      img.b_coords.resize(n);
      int c[3];
      c[ax] = idx;
      for (int a = 0; a < n; ++a) {
        img.a_coords(a) = grid.spec.coordinate(a_ax, a);
        img.b_coords(a) = grid.spec.coordinate(b_ax, a);
        for (int b = 0; b < n; ++b) {
          c[a_ax] = a;
          c[b_ax] = b;
          img.values(a, b) = grid.at(c[0], c[1], c[2]);
        }
      }
      img.a_label = axis_name(static_cast<Axis>(a_ax));
      img.b_label = axis_name(static_cast<Axis>(b_ax));
      o << "# slice " << axis_name(axis) << " = " << num(grid.spec.coordinate(ax, idx)) << " (index " << idx << ")\n";
    }
    o << "# rows " << img.a_label << " from " << num(img.a_coords(0)) << " to " << num(img.a_coords(n - 1)) << ", columns "
      << img.b_label << " from " << num(img.b_coords(0)) << " to " << num(img.b_coords(n - 1)) << ", " << n << " x " << n
      << "\n";
    for (int a = 0; a < n; ++a, ++rows) {
      for (int b = 0; b < n; ++b) o << (b ? " " : "") << num(img.values(a, b));
      o << "\n";
    }
  } else {
    throw std::invalid_argument("export what must be voxels, isocontour, slice or projection, got " + what);
  }
  write_text(out_path, o.str());
  log << "export: " << rows << " rows -> " << out_path << "\n";
  return {{out_path}, {{"rows", rows}, {"manifest_hash", m.hash}}};
}

Outcome run(const Json& cfg, std::ostream& log) {
  const auto cmd = cfg.at("command").get<std::string>();
  if (cmd == "simulate") return cmd_simulate(cfg, log);
  if (cmd == "radon") return cmd_radon(cfg, log);
  if (cmd == "em") return cmd_em(cfg, log);
  if (cmd == "gauss") return cmd_gauss(cfg, log);
  if (cmd == "analyze") return cmd_analyze(cfg, log);
  if (cmd == "export") return cmd_export(cfg, log);
  throw std::invalid_argument("unknown command: " + cmd);
}

}  // namespace polartomo::cli
