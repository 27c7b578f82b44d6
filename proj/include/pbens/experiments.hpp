#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace pbens {

using Json = nlohmann::ordered_json;

/// Experiment kinds: "linear-exactness", "toy-relu", "uci", "classify-demo".
std::vector<std::string> experiment_kinds();

/// Every key an experiment understands, with its default value.
Json default_config(const std::string& kind);

/// Overlays `user` on the defaults (objects merge recursively; a "preset"
/// key is applied before the remaining user keys). Unknown keys and
/// ill-typed values throw Config.
Json resolve_config(const std::string& kind, const Json& user);

struct ExperimentOutput {
  Json results;   // deterministic given config
  Json config;    // effective config
  Json metadata;  // timings, thread count, version
  std::vector<std::pair<std::string, std::string>> files;  // (name, CSV text)
};

struct RunContext {
  int threads = 1;
  std::optional<std::uint64_t> seed;  // overrides config "seed"
};

ExperimentOutput run_experiment(const std::string& kind, const Json& user_config,
                                const RunContext& ctx = {});

/// Writes results.json, config.json, metadata.json and the CSV files.
void write_outputs(const std::filesystem::path& dir, const ExperimentOutput& out);

}  // namespace pbens
