#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "polartomo/forward_model.hpp"

namespace polartomo::cli {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Fully populated configuration for `command` with every default spelled out.
Json default_config(const std::string& command);

/// RFC 7386 merge of `overrides` onto `base`; unknown keys are rejected.
Json merge_config(const Json& base, const Json& overrides);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

struct Manifest {
  Json body;
  std::string hash;  ///< 16 hex digits, FNV-1a 64 of body.dump()
};

Manifest make_manifest(const Json& config, const std::vector<std::pair<std::string, std::string>>& inputs);

/// Files written by a command, in order.
struct Outcome {
  std::vector<std::string> files;
  Json summary;
};

Outcome cmd_simulate(const Json& config, std::ostream& log);
Outcome cmd_radon(const Json& config, std::ostream& log);
Outcome cmd_em(const Json& config, std::ostream& log);
Outcome cmd_gauss(const Json& config, std::ostream& log);
Outcome cmd_analyze(const Json& config, std::ostream& log);
Outcome cmd_export(const Json& config, std::ostream& log);

/// Dispatch on config["command"].
Outcome run(const Json& config, std::ostream& log);

GaussianState state_from_config(const Json& state);
std::vector<Direction> scan_from_config(const Json& scan);

/// True when every direction lies in the closed first octant.
bool covers_one_octant(const std::vector<Histogram>& hs);

/// Records whose direction matches one of `dirs` up to sign, first match per target.
std::vector<Histogram> select_directions(const std::vector<Histogram>& hs, const std::vector<Direction>& dirs);

}  // namespace polartomo::cli
