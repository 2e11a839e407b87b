#include <iostream>

#include "CLI11.hpp"
#include "mcvit/commands.hpp"

using namespace mcvit;

namespace {

struct PathFlags {
  std::string input, output, manifest, metrics, checkpoint, report;

  void apply(RunPaths& p) const {
    for (auto [flag, slot] : {std::pair{&input, &p.input}, {&output, &p.output}, {&manifest, &p.manifest},
                              {&metrics, &p.metrics}, {&checkpoint, &p.checkpoint}, {&report, &p.report}})
      if (!flag->empty()) *slot = *flag;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memory-consolidated video transformer toolkit"};
  app.require_subcommand(1);

  std::string config;
  PathFlags flags;
  auto config_command = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("config", config, "JSON run config")->required();
    return sub;
  };

  CLI::App* run = config_command("run", "Encode a video or token file with the configured variant");
  run->add_option("--input", flags.input, "Raw-tensor video (T,H,W,C) or tokens (N,d)");
  run->add_option("--output", flags.output, "Embedding output file");
  run->add_option("--manifest", flags.manifest, "Run manifest (default: <output>.json)");
  run->add_option("--checkpoint", flags.checkpoint, "Checkpoint directory to load weights from");

  CLI::App* bench = config_command("bench", "Write the analytic cost sweep as CSV");
  bench->add_option("--output", flags.output, "CSV output file");
  bench->add_option("--manifest", flags.manifest, "Manifest (default: <output>.json)");

  CLI::App* train = config_command("train", "Train on the synthetic task");
  train->add_option("--metrics", flags.metrics, "Metrics CSV output");
  train->add_option("--checkpoint", flags.checkpoint, "Checkpoint output directory");

  CLI::App* grad = config_command("gradcheck", "Finite-difference check of every parameter gradient");
  grad->add_option("--report", flags.report, "JSON report output");

  ConsolidateArgs cons;
  CLI::App* consolidate = app.add_subcommand("consolidate", "Reduce a token matrix to K rows");
  consolidate->add_option("--method", cons.method, "random, coreset or kmeans")->capture_default_str();
  consolidate->add_option("-k,--k", cons.k, "Rows to keep")->required();
  consolidate->add_option("--kmeans-iters", cons.kmeans_iters, "k-means iterations")->capture_default_str();
  consolidate->add_option("--seed", cons.seed, "Seed")->capture_default_str();
  consolidate->add_option("--input", cons.input, "Raw-tensor token matrix")->required();
  consolidate->add_option("--output", cons.output, "Output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  return run_guarded(
      [&] {
        if (consolidate->parsed()) return cmd_consolidate(cons, std::cout);
        RunConfig cfg = load_run_config(config);
        flags.apply(cfg.paths);
        if (run->parsed()) return cmd_run(cfg, std::cout);
        if (bench->parsed()) return cmd_bench(cfg, std::cout);
        if (train->parsed()) return cmd_train(cfg, std::cout);
        return cmd_gradcheck(cfg, std::cout);
      },
      std::cerr);
}
