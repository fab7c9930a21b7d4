#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "polartomo/core.hpp"
#include "polartomo/forward_model.hpp"
#include "polartomo/wigner_grid.hpp"

#include <unistd.h>

using namespace polartomo;
using cli::Json;
namespace fs = std::filesystem;

namespace {

struct Dir {
  fs::path root;
  Dir() : root(fs::temp_directory_path() / ("polartomo_cli_" + std::to_string(::getpid()))) { fs::create_directories(root); }
  ~Dir() { fs::remove_all(root); }
  std::string operator()(const std::string& name) const { return (root / name).string(); }
};

cli::Outcome run(const std::string& cmd, const Json& overrides) {
  std::ostringstream log;
  return cli::run(cli::merge_config(cli::default_config(cmd), overrides), log);
}

Json read_json(const std::string& p) {
  std::ifstream in(p);
  return Json::parse(in);
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("fnv1a64") {
  CHECK(cli::hex64(cli::fnv1a64("")) == "cbf29ce484222325");
  CHECK(cli::hex64(cli::fnv1a64("a")) == "af63dc4c8601ec8c");
  CHECK(cli::hex64(cli::fnv1a64("foobar")) == "85944171f73967e8");
}

TEST_CASE("configuration merge") {
  const Json base = cli::default_config("radon");
  CHECK_THROWS_AS(cli::merge_config(base, {{"grid", {{"voxel", 3}}}}), std::invalid_argument);
  CHECK_THROWS_AS(cli::merge_config(base, {{"bogus", 1}}), std::invalid_argument);
  const Json m = cli::merge_config(base, {{"grid", {{"voxels", 33}}}});
  CHECK(m["grid"]["voxels"] == 33);
  CHECK(m["filter"]["cutoff"] == base["filter"]["cutoff"]);
  const Json r = cli::merge_config(base, {{"grid", {{"center", nullptr}}}});
  CHECK(r["grid"].contains("center"));
  CHECK_THROWS(cli::default_config("frobnicate"));
}

TEST_CASE("simulate") {
  Dir d;
  run("simulate", {{"out", d("r.hset")}, {"sampling", {{"samples", 2000}}}});
  CHECK(read_histogram_set(d("r.hset")).records.size() == 9);
  run("simulate", {{"out", d("o.hset")}, {"scan", {{"kind", "octant"}, {"n_theta", 90}, {"n_phi", 90}}},
                   {"sampling", {{"samples", 200}, {"bins", 51}}}});
  const auto set = read_histogram_set(d("o.hset"));
  CHECK(set.records.size() == 8100);
  CHECK(set.manifest_hash.size() == 16);

  const Json same = {{"out", d("a.hset")}, {"seed", 5}, {"sampling", {{"samples", 5000}}}};
  run("simulate", same);
  const auto first = slurp(d("a.hset"));
  run("simulate", same);
  CHECK(first.size() > 0);
  CHECK(slurp(d("a.hset")) == first);
  run("simulate", {{"out", d("a.hset")}, {"seed", 6}, {"sampling", {{"samples", 5000}}}});
  CHECK(slurp(d("a.hset")) != first);

  const Json bad = {{"out", d("bad.hset")},
                    {"state", {{"covariance", {{1, 0, 0}, {0, -2, 0}, {0, 0, 1}}}}}};
  try {
    run("simulate", bad);
    FAIL("non-PSD covariance accepted");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("-2") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(d("bad.hset")));
}

TEST_CASE("radon and em") {
  Dir d;
  run("simulate", {{"out", d("one.hset")}, {"scan", {{"kind", "list"}, {"directions", {{0.3, 0.2}}}}},
                   {"sampling", {{"samples", 2000}}}});
  CHECK_THROWS(run("radon", {{"in", d("one.hset")}, {"out", d("one.wg")}}));

  run("simulate", {{"out", d("o.hset")}, {"scan", {{"kind", "octant"}, {"n_theta", 13}, {"n_phi", 13}}},
                   {"sampling", {{"samples", 20000}, {"bins", 201}}}});
  run("radon", {{"in", d("o.hset")}, {"out", d("o.wg")}, {"grid", {{"voxels", 21}}}, {"filter", {{"cutoff", 0.6}}}});
  const Json rep = read_json(d("o.wg.report.json"));
  CHECK(rep["manifest"]["config"]["filter"]["cutoff"] == 0.6);
  CHECK(rep["symmetry_expanded"] == true);
  const auto grid = read_wigner_grid(d("o.wg"));
  CHECK(grid.n() == 21);

  run("em", {{"in", d("o.hset")}, {"out", d("u.wg")}, {"directions", "reduced"}, {"grid", {{"voxels", 9}}},
             {"em", {{"max_iter", 0}}}});
  const auto u = read_wigner_grid(d("u.wg"));
  const auto [lo, hi] = std::minmax_element(u.values.begin(), u.values.end());
  CHECK(*hi - *lo <= 1e-12 * *hi);

  run("em", {{"in", d("o.hset")}, {"out", d("e.wg")}, {"directions", "reduced"}, {"grid", {{"voxels", 11}}},
             {"em", {{"max_iter", 25}}}});
  std::ifstream log(d("e.wg.log.csv"));
  std::string line;
  std::vector<double> kl;
  while (std::getline(log, line))
    if (!line.empty() && line[0] != '#' && line[0] != 'i') kl.push_back(std::stod(line.substr(line.find(',') + 1)));
  REQUIRE(kl.size() >= 2);
  for (std::size_t i = 1; i < kl.size(); ++i) CHECK(kl[i] <= kl[i - 1] * (1 + 1e-12));
}

TEST_CASE("gauss, analyze and export") {
  Dir d;
  const Json six = {{0.0, 0.0}, {0.3, 0.0}, {0.6, 0.0}, {0.9, 0.0}, {1.2, 0.0}, {1.5, 0.0}};
  run("simulate", {{"out", d("flat.hset")}, {"scan", {{"kind", "list"}, {"directions", six}}},
                   {"sampling", {{"samples", 5000}}}});
  CHECK_THROWS_AS(run("gauss", {{"in", d("flat.hset")}, {"out", d("flat.json")}}), Underdetermined);

  run("simulate", {{"out", d("r.hset")}, {"sampling", {{"samples", 20000}}}});
  run("gauss", {{"in", d("r.hset")}, {"out", d("fit.json")}});
  const Json fit = read_json(d("fit.json"));
  CHECK(fit.contains("misalignment_deg"));
  CHECK(fit["principal_variances"].size() == 3);
  CHECK(fit["sigma_multiplier"] == 3.0);

  run("analyze", {{"in", d("r.hset")}, {"out", d("an.json")}});
  const Json an = read_json(d("an.json"));
  CHECK(an["squeezing"]["is_polarization_squeezed"] == true);
  CHECK(an["squeezing"]["squeezing_db"].get<double>() < -3.0);

  run("simulate", {{"out", d("o.hset")}, {"scan", {{"kind", "octant"}, {"n_theta", 9}, {"n_phi", 9}}},
                   {"sampling", {{"samples", 5000}, {"bins", 151}}}});
  run("radon", {{"in", d("o.hset")}, {"out", d("o.wg")}, {"grid", {{"voxels", 11}}}});
  for (const std::string what : {"voxels", "isocontour", "slice", "projection"}) {
    const auto out = d("x." + what);
    run("export", {{"in", d("o.wg")}, {"out", out}, {"what", what}});
    std::ifstream in(out);
    std::string first;
    std::getline(in, first);
    CHECK(first == "# polartomo-export " + what);
    int data = 0;
    std::string line;
    while (std::getline(in, line)) data += !line.empty() && line[0] != '#';
    if (what == "voxels") CHECK(data == 11 * 11 * 11);
    if (what == "slice" || what == "projection") CHECK(data == 11);
    if (what == "isocontour") CHECK(data > 0);
  }
  CHECK_THROWS(run("export", {{"in", d("o.wg")}, {"out", d("x.bad")}, {"what", "slice"}, {"index", 11}}));
}
