#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

using polartomo::cli::Json;

namespace {

struct Flags {
  std::string in, out, config, preset, scan, mode, directions, grid, mean_axis, what, axis;
  std::optional<std::uint64_t> seed;
  std::optional<double> samples;
  std::optional<int> voxels, max_iter, bins, n_theta, n_phi, index;
  std::vector<double> extent;
  std::optional<double> cutoff, tol, confidence, level;
  bool print_config = false, with_reduced = false;
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--in", f.in, "input file");
  sub->add_option("--out", f.out, "output file");
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--grid-voxels", f.voxels, "voxels per axis");
  sub->add_option("--grid-extent", f.extent, "half-width, one value or three (0 = from data)")->expected(1, 3);
  sub->add_option("--filter-cutoff", f.cutoff, "Hamming cutoff as a fraction of Nyquist");
  sub->add_option("--tol", f.tol, "convergence tolerance");
  sub->add_option("--max-iter", f.max_iter, "iteration cap");
  sub->add_option("--confidence", f.confidence, "interval half-width in sigmas, or a two-sided level below 1");
  sub->add_option("--preset", f.preset, "state preset: paper, coherent, isotropic-squeezed");
  sub->add_option("--config", f.config, "JSON configuration; its values override flags");
  sub->add_flag("--print-config", f.print_config, "print the resolved configuration and exit");
}

Json flag_overrides(const std::string& cmd, const Flags& f) {
  Json o = Json::object();
  if (!f.in.empty()) o["in"] = f.in;
  if (!f.out.empty()) o["out"] = f.out;
  if (f.seed) o["seed"] = *f.seed;
  if (f.voxels) o["grid"]["voxels"] = *f.voxels;
  if (!f.extent.empty()) o["grid"]["extent"] = f.extent.size() == 1 ? Json(f.extent[0]) : Json(f.extent);
  if (f.cutoff) o["filter"]["cutoff"] = *f.cutoff;
  const char* iter_group = cmd == "em" ? "em" : "fit";
  if (f.tol) o[iter_group]["tol"] = *f.tol;
  if (f.max_iter) o[iter_group]["max_iter"] = *f.max_iter;
  if (f.confidence) o["fit"]["confidence"] = *f.confidence;
  if (!f.preset.empty()) o["state"]["preset"] = f.preset;
  if (!f.scan.empty()) o["scan"]["kind"] = f.scan;
  if (f.n_theta) o["scan"]["n_theta"] = *f.n_theta;
  if (f.n_phi) o["scan"]["n_phi"] = *f.n_phi;
  if (f.with_reduced) o["scan"]["with_reduced"] = true;
  if (!f.mode.empty()) o["sampling"]["mode"] = f.mode;
  if (f.samples) {
    if (!(*f.samples >= 1.0 && *f.samples <= 1.8e19 && std::floor(*f.samples) == *f.samples))
      throw std::invalid_argument("--samples must be a positive integer");
    o["sampling"]["samples"] = static_cast<std::uint64_t>(*f.samples);
  }
  if (f.bins) o["sampling"]["bins"] = *f.bins;
  if (!f.directions.empty()) o["directions"] = f.directions;
  if (!f.grid.empty()) o["grid"] = f.grid;
  if (!f.mean_axis.empty()) o["mean_axis"] = f.mean_axis;
  if (!f.what.empty()) o["what"] = f.what;
  if (!f.axis.empty()) o["axis"] = f.axis;
  if (f.index) o["index"] = *f.index;
  if (f.level) o["level"] = *f.level;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polarization-state tomography: simulate, reconstruct, analyze, export"};
  app.require_subcommand(1);
  Flags f;

  auto* sim = app.add_subcommand("simulate", "sample a histogram set from a Gaussian state");
  sim->add_option("--scan", f.scan, "reduced, octant, sphere or list");
  sim->add_option("--n-theta", f.n_theta, "polar steps for octant or sphere scans");
  sim->add_option("--n-phi", f.n_phi, "azimuthal steps for octant or sphere scans");
  sim->add_flag("--with-reduced", f.with_reduced, "append the nine reduced-scan directions if missing");
  sim->add_option("--samples", f.samples, "samples per direction");
  sim->add_option("--bins", f.bins, "bins per histogram");
  sim->add_option("--mode", f.mode, "sampled or expected (noiseless counts)");

  auto* radon = app.add_subcommand("radon", "inverse Radon reconstruction to a Wigner grid");
  auto* em = app.add_subcommand("em", "maximum-likelihood EM reconstruction to a Wigner grid");
  auto* gauss = app.add_subcommand("gauss", "Gaussian covariance fit with confidence intervals");
  auto* analyze = app.add_subcommand("analyze", "squeezing, Gaussianity and dark-plane reports");
  for (auto* s : {em, gauss, analyze}) s->add_option("--directions", f.directions, "all or reduced (nine directions)");
  analyze->add_option("--grid", f.grid, "Radon grid for the dark-plane comparison");
  analyze->add_option("--mean-axis", f.mean_axis, "J1, J2 or J3; defaults to the dataset's state");

  auto* exp = app.add_subcommand("export", "write plot data from a Wigner grid");
  exp->add_option("--what", f.what, "voxels, isocontour, slice or projection");
  exp->add_option("--axis", f.axis, "slice or projection axis");
  exp->add_option("--index", f.index, "slice index (default: middle)");
  exp->add_option("--level", f.level, "isocontour level as a fraction of the maximum");

  for (auto* s : {sim, radon, em, gauss, analyze, exp}) add_common(s, f);

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    Json cfg = polartomo::cli::merge_config(polartomo::cli::default_config(cmd), flag_overrides(cmd, f));
    if (!f.config.empty()) {
      std::ifstream in(f.config);
      if (!in) throw std::runtime_error("cannot open " + f.config);
      Json file = Json::parse(in);
      if (file.contains("command") && file.at("command") != cmd)
        throw std::invalid_argument("configuration is for " + file.at("command").get<std::string>() + ", not " + cmd);
      cfg = polartomo::cli::merge_config(cfg, file);
    }
    if (f.print_config) {
      std::cout << cfg.dump(2) << "\n";
      return 0;
    }
    const auto outcome = polartomo::cli::run(cfg, std::cerr);
    std::cout << Json{{"files", outcome.files}}.dump() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "polartomo " << cmd << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
