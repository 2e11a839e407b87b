#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcvit/gradcheck.hpp"
#include "mcvit/profiler.hpp"
#include "mcvit/train.hpp"

namespace mcvit {

struct BenchSettings {
  std::vector<int> frames{16, 32, 64};
  std::vector<Variant> variants{Variant::joint, Variant::streaming, Variant::memory_augmented,
                                Variant::memory_consolidated};
};

struct GradcheckSettings {
  GradcheckOptions options;
  std::size_t max_parameters = 5000;
  int batch_size = 2;
};

struct RunPaths {
  std::filesystem::path input, output, manifest, metrics, checkpoint, report;
};

/// Everything one CLI invocation needs. Relative paths are resolved against
/// the directory holding the config file.
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig training;
  SyntheticTaskConfig task;
  BenchSettings bench;
  GradcheckSettings gradcheck;
  RunPaths paths;
  std::string hash;  // 16 hex digits over every section except "paths"
};

/// FNV-1a 64 of the compact dump (object keys come out sorted).
std::string config_hash(const nlohmann::json& doc);

/// Unknown keys, wrong types and invalid values raise ConfigError.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace mcvit
