#include "mcvit/commands.hpp"

#include <fstream>
#include <iomanip>

#include "mcvit/rng.hpp"

namespace mcvit {

using nlohmann::json;
namespace fs = std::filesystem;

int run_guarded(const std::function<int()>& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << '\n';
    return kExitIo;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
}

namespace {

void require_input(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("no ") + what + " path given");
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " " + p.string() + " does not exist");
}

void require_output(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("no ") + what + " path given");
  const fs::path parent = fs::absolute(p).parent_path();
  if (!fs::is_directory(parent)) throw IoError("directory " + parent.string() + " for " + what + " does not exist");
}

fs::path manifest_for(const RunConfig& cfg) {
  if (!cfg.paths.manifest.empty()) return cfg.paths.manifest;
  fs::path m = cfg.paths.output;
  m += ".json";
  return m;
}

json base_manifest(const std::string& command, std::uint64_t seed, const std::string& hash) {
  return {{"command", command}, {"seed", seed}, {"config_hash", hash}, {"rng", Rng::kAlgorithm}};
}

void write_json(const fs::path& p, const json& j) { write_file_atomic(p, j.dump(2) + "\n"); }

VideoTextModel build_model(const RunConfig& cfg, const ModelConfig& model_cfg) {
  return init_video_text_model(model_cfg, cfg.task.classes, cfg.seed);
}

SyntheticTask build_task(const RunConfig& cfg) {
  return SyntheticTask(cfg.model.video, cfg.model.patch.channels, cfg.model.segments, cfg.task);
}

std::string tensor_file(const std::string& name) { return name + ".mcvt"; }

}  // namespace

void save_checkpoint(const fs::path& dir, const VideoTextModel& model, json manifest) {
  const fs::path parent = fs::absolute(dir).parent_path();
  if (!fs::is_directory(parent)) throw IoError("directory " + parent.string() + " does not exist");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create checkpoint directory " + dir.string());
  json tensors = json::array();
  for (const auto& [name, var] : model.state()) {
    save_tensor(dir / tensor_file(name), Tensor::from_matrix(var.value()));
    tensors.push_back({{"name", name}, {"file", tensor_file(name)}, {"shape", {var.rows(), var.cols()}}});
  }
  manifest["tensors"] = std::move(tensors);
  write_json(dir / "manifest.json", manifest);
}

json load_checkpoint(const fs::path& dir, VideoTextModel& model) {
  const fs::path mpath = dir / "manifest.json";
  std::ifstream in(mpath);
  if (!in) throw IoError("cannot open checkpoint manifest " + mpath.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("checkpoint manifest " + mpath.string() + " is not valid JSON: " + e.what());
  }
  std::map<std::string, std::string> files;
  for (const auto& t : manifest.at("tensors")) files[t.at("name").get<std::string>()] = t.at("file").get<std::string>();
  for (auto& [name, var] : model.state()) {
    const auto it = files.find(name);
    if (it == files.end()) throw ShapeError("checkpoint has no tensor '" + name + "'");
    const Matrix m = load_tensor(dir / it->second).to_matrix();
    if (m.rows() != var.rows() || m.cols() != var.cols())
      throw ShapeError("checkpoint tensor '" + name + "' has shape " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", model expects " + std::to_string(var.rows()) + "x" +
                       std::to_string(var.cols()));
    var.mutable_value() = m;
  }
  return manifest;
}

int cmd_run(const RunConfig& cfg, std::ostream& out) {
  require_input(cfg.paths.input, "input");
  require_output(cfg.paths.output, "output");
  const fs::path manifest_path = manifest_for(cfg);
  require_output(manifest_path, "manifest");

  VideoTextModel model = build_model(cfg, cfg.model);
  if (!cfg.paths.checkpoint.empty()) load_checkpoint(cfg.paths.checkpoint, model);

  const Tensor input = load_tensor(cfg.paths.input);
  const ModelConfig& m = cfg.model;
  ad::NoGradGuard no_grad;
  VideoEmbedding emb;
  if (input.rank() == 4) {
    const std::vector<std::int64_t> want{m.video.frames, m.video.height, m.video.width, m.patch.channels};
    if (input.shape() != want) throw ShapeError("input video shape does not match the configured video");
    emb = encode_video(input, m, model.params);
  } else if (input.rank() == 2) {
    const Matrix tokens = input.to_matrix();
    if (tokens.rows() != m.plan().total_tokens() || tokens.cols() != m.embed_dim())
      throw ShapeError("input tokens must be " + std::to_string(m.plan().total_tokens()) + "x" +
                       std::to_string(m.embed_dim()));
    emb = run_variant(ad::Var::constant(tokens), m, model.params);
  } else {
    throw ShapeError("input must be a rank-4 video or a rank-2 token matrix");
  }

  const Tensor result = Tensor::from_matrix(emb.pooled.value());
  save_tensor(cfg.paths.output, result);
  json manifest = base_manifest("run", cfg.seed, cfg.hash);
  manifest["variant"] = to_string(m.variant);
  manifest["input_shape"] = input.shape();
  manifest["output_shape"] = result.shape();
  manifest["segments"] = m.segments;
  manifest["output"] = cfg.paths.output.filename().string();
  write_json(manifest_path, manifest);
  out << "wrote " << cfg.paths.output.string() << " (" << to_string(m.variant) << ")\n";
  return kExitOk;
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  require_output(cfg.paths.output, "output");
  const fs::path manifest_path = manifest_for(cfg);
  require_output(manifest_path, "manifest");
  const auto rows = sweep(cfg.model, cfg.bench.frames, cfg.bench.variants);
  write_sweep(cfg.paths.output, rows);
  json manifest = base_manifest("bench", cfg.seed, cfg.hash);
  manifest["rows"] = rows.size();
  manifest["frames"] = cfg.bench.frames;
  write_json(manifest_path, manifest);
  out << "wrote " << rows.size() << " rows to " << cfg.paths.output.string() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  require_output(cfg.paths.metrics, "metrics");
  if (cfg.paths.checkpoint.empty()) throw ConfigError("no checkpoint path given");
  require_output(cfg.paths.checkpoint, "checkpoint");

  const SyntheticTask task = build_task(cfg);
  VideoTextModel model = build_model(cfg, cfg.model);
  const int every = std::max(1, cfg.training.training_steps / 10);
  const TrainResult result = train_loop(model, task, cfg.training, [&](const MetricsRow& r) {
    if (r.step % every == 0) out << "step " << r.step << " loss " << r.loss << " acc " << r.accuracy << '\n';
  });

  write_file_atomic(cfg.paths.metrics, metrics_csv(result.log));
  json manifest = base_manifest("train", cfg.seed, cfg.hash);
  manifest["variant"] = to_string(cfg.model.variant);
  manifest["training_steps"] = cfg.training.training_steps;
  manifest["heldout_accuracy"] = result.heldout_accuracy;
  manifest["final_loss"] = result.log.empty() ? 0.0 : result.log.back().loss;
  save_checkpoint(cfg.paths.checkpoint, model, manifest);
  out << "held-out accuracy " << result.heldout_accuracy << '\n';
  return kExitOk;
}

int cmd_consolidate(const ConsolidateArgs& args, std::ostream& out) {
  ConsolidationConfig c;
  c.method = parse_consolidation_method(args.method);
  if (c.method == ConsolidationMethod::none) throw ConfigError("consolidate needs random, coreset or kmeans");
  c.memories_per_segment = args.k;
  c.kmeans_iters = args.kmeans_iters;
  c.seed = args.seed;
  require_input(args.input, "input");
  require_output(args.output, "output");

  const Tensor in = load_tensor(args.input);
  if (in.rank() != 2) throw ShapeError("consolidate expects a rank-2 token matrix");
  const Matrix z = in.to_matrix();
  c.validate(z.rows());
  Rng rng(args.seed);
  ad::NoGradGuard no_grad;
  const Matrix memories = consolidate(ad::Var::constant(z), c, rng).value();
  save_tensor(args.output, Tensor::from_matrix(memories));

  json cmd = {{"method", args.method}, {"k", args.k}, {"kmeans_iters", args.kmeans_iters}, {"seed", args.seed}};
  json manifest = base_manifest("consolidate", args.seed, config_hash(cmd));
  manifest["method"] = args.method;
  manifest["input_shape"] = in.shape();
  manifest["output_shape"] = {memories.rows(), memories.cols()};
  fs::path mpath = args.output;
  mpath += ".json";
  write_json(mpath, manifest);
  out << "consolidated " << z.rows() << " rows to " << memories.rows() << '\n';
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.paths.report.empty()) require_output(cfg.paths.report, "report");
  // Finite differences see through stored memories, so the analytic side must too.
  ModelConfig m = cfg.model;
  m.memory_grad_flow = true;
  VideoTextModel model = build_model(cfg, m);
  const auto params = model.parameters();
  std::size_t count = 0;
  for (const auto& p : params) count += static_cast<std::size_t>(p.var.value().size());
  if (count > cfg.gradcheck.max_parameters)
    throw ConfigError("gradcheck model has " + std::to_string(count) + " parameters, limit is " +
                      std::to_string(cfg.gradcheck.max_parameters));

  const SyntheticTask task = build_task(cfg);
  std::vector<Sample> batch;
  std::vector<int> labels;
  for (int i = 0; i < cfg.gradcheck.batch_size; ++i) {
    batch.push_back(task.sample(SyntheticTask::kTrainSplit, static_cast<std::uint64_t>(i)));
    labels.push_back(batch.back().label);
  }
  const auto loss = [&] {
    return batch_loss(model, embed_batch(model, batch), labels, cfg.training.objective, cfg.training.contrastive);
  };
  const GradcheckReport report = gradcheck(loss, params, cfg.gradcheck.options);

  json groups = json::array();
  for (const auto& g : report.groups) {
    out << std::left << std::setw(24) << g.group << " entries " << std::setw(6) << g.entries << " max_rel_error "
        << g.max_rel_error << '\n';
    groups.push_back({{"group", g.group}, {"entries", g.entries}, {"max_rel_error", g.max_rel_error}});
  }
  out << (report.passed ? "PASS" : "FAIL") << " parameters " << count << " max_rel_error " << report.max_rel_error
      << " tolerance " << cfg.gradcheck.options.tolerance << '\n';
  if (!cfg.paths.report.empty()) {
    json j = base_manifest("gradcheck", cfg.seed, cfg.hash);
    j["passed"] = report.passed;
    j["parameters"] = count;
    j["max_rel_error"] = report.max_rel_error;
    j["groups"] = std::move(groups);
    write_json(cfg.paths.report, j);
  }
  return report.passed ? kExitOk : kExitCheckFailed;
}

}  // namespace mcvit
