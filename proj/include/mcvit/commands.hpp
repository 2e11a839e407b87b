#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>

#include "mcvit/config.hpp"

namespace mcvit {

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitIo = 3, kExitDivergence = 4 };

/// Runs `body`, mapping the error taxonomy onto exit codes and printing the
/// message to `err`.
int run_guarded(const std::function<int()>& body, std::ostream& err);

// Each command returns an exit code for check results and throws for errors.
int cmd_run(const RunConfig& cfg, std::ostream& out);
int cmd_bench(const RunConfig& cfg, std::ostream& out);
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_gradcheck(const RunConfig& cfg, std::ostream& out);

struct ConsolidateArgs {
  std::string method = "kmeans";
  int k = 1;
  int kmeans_iters = 5;
  std::uint64_t seed = 0;
  std::filesystem::path input, output;
};

int cmd_consolidate(const ConsolidateArgs& args, std::ostream& out);

/// One raw-tensor file per state entry plus manifest.json, all written
/// atomically with the manifest last.
void save_checkpoint(const std::filesystem::path& dir, const VideoTextModel& model, nlohmann::json manifest);

/// Fills every state entry of `model` from `dir`; shapes must match exactly.
nlohmann::json load_checkpoint(const std::filesystem::path& dir, VideoTextModel& model);

}  // namespace mcvit
