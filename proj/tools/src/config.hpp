#pragma once

// Run configuration: one JSON file, overridden by command-line flags.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mdam/pipeline.hpp"
#include "mdam/simlab.hpp"

namespace mdam::cli {

namespace fs = std::filesystem;

struct RunConfig {
  fs::path base_dir = ".";  // relative paths resolve against the config file's directory
  std::uint64_t seed = 20240601;
  unsigned threads = 0;     // 0 = available parallelism
  fs::path out = "out";

  std::optional<Schema> schema;
  fs::path sample;
  fs::path margins;
  double population_size = 0.0;
  fs::path completed;  // input directory for `estimate` (default: out)
  fs::path metrics;    // input file for `report` (default: out/metrics.csv)

  PipelineOptions pipeline;
  bool method_set = false;
  std::vector<std::string> estimands;

  StudyConfig study;
  PopulationConfig population = PopulationConfig::defaults();
  std::optional<NonresponseConfig> nonresponse;

  fs::path resolve(const fs::path& p) const { return p.empty() || p.is_absolute() ? p : base_dir / p; }
  NonresponseConfig nonresponse_or_default() const;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  std::optional<std::string> method;
};

RunConfig parse_config(const nlohmann::json& j, const fs::path& base_dir);
RunConfig load_config(const fs::path& path);
void apply_overrides(RunConfig& cfg, const Overrides& o);

Schema parse_schema(const nlohmann::json& j);
nlohmann::json schema_to_json(const Schema& s);

}  // namespace mdam::cli
