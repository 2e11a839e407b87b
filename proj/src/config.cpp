#include "mcvit/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "mcvit/rng.hpp"

namespace mcvit {

using nlohmann::json;

namespace {

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  require_object(j, where);
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  bool ok;
  if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
  else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
  else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer() && (std::is_signed_v<T> || v.get<std::int64_t>() >= 0);
  else ok = v.is_number();
  if (!ok) throw ConfigError(where + "." + key + " has the wrong type: " + v.dump());
  out = v.get<T>();
}

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  return doc.contains(key) ? doc.at(key) : empty;
}

std::filesystem::path resolve(const json& j, const char* key, const std::filesystem::path& base) {
  std::string s;
  read(j, key, s, "paths");
  if (s.empty()) return {};
  std::filesystem::path p(s);
  return p.is_absolute() || base.empty() ? p : base / p;
}

void parse_model(const json& j, ModelConfig& m) {
  const std::string where = "model";
  check_keys(j, {"variant", "layers", "heads", "mlp_ratio", "embed_dim", "channels", "patch", "frames", "height",
                 "width", "segments", "memory_grad_flow", "max_joint_tokens", "lora"},
             where);
  std::string variant = to_string(m.variant);
  read(j, "variant", variant, where);
  m.variant = parse_variant(variant);
  read(j, "layers", m.layers, where);
  read(j, "heads", m.heads, where);
  read(j, "mlp_ratio", m.mlp_ratio, where);
  read(j, "embed_dim", m.patch.embed_dim, where);
  read(j, "channels", m.patch.channels, where);
  if (j.contains("patch")) {
    const json& p = j.at("patch");
    check_keys(p, {"t", "h", "w"}, "model.patch");
    read(p, "t", m.patch.t, "model.patch");
    read(p, "h", m.patch.h, "model.patch");
    read(p, "w", m.patch.w, "model.patch");
  }
  read(j, "frames", m.video.frames, where);
  read(j, "height", m.video.height, where);
  read(j, "width", m.video.width, where);
  read(j, "segments", m.segments, where);
  read(j, "memory_grad_flow", m.memory_grad_flow, where);
  read(j, "max_joint_tokens", m.max_joint_tokens, where);
  if (j.contains("lora")) {
    const json& l = j.at("lora");
    check_keys(l, {"rank", "alpha"}, "model.lora");
    read(l, "rank", m.lora.rank, "model.lora");
    read(l, "alpha", m.lora.alpha, "model.lora");
  }
}

void parse_consolidation(const json& j, ConsolidationConfig& c) {
  const std::string where = "consolidation";
  check_keys(j, {"method", "memories_per_segment", "kmeans_iters"}, where);
  std::string method = to_string(c.method);
  read(j, "method", method, where);
  c.method = parse_consolidation_method(method);
  read(j, "memories_per_segment", c.memories_per_segment, where);
  read(j, "kmeans_iters", c.kmeans_iters, where);
}

void parse_policy(const json& j, MemoryPolicy& p) {
  const std::string where = "policy";
  check_keys(j, {"kind", "segments", "cap_tokens"}, where);
  std::string kind = to_string(p.kind);
  read(j, "kind", kind, where);
  p.kind = parse_policy_kind(kind);
  read(j, "segments", p.segments, where);
  read(j, "cap_tokens", p.cap_tokens, where);
}

void parse_training(const json& j, TrainConfig& t) {
  const std::string where = "training";
  check_keys(j, {"base_learning_rate", "linear_warmup_steps", "gradient_clip", "batch_size", "label_smoothing",
                 "training_steps", "weight_decay_rate", "temperature", "normalize", "objective", "train_size",
                 "eval_size"},
             where);
  read(j, "base_learning_rate", t.optimizer.base_learning_rate, where);
  read(j, "linear_warmup_steps", t.optimizer.linear_warmup_steps, where);
  read(j, "gradient_clip", t.optimizer.gradient_clip, where);
  read(j, "weight_decay_rate", t.optimizer.weight_decay_rate, where);
  read(j, "batch_size", t.batch_size, where);
  read(j, "label_smoothing", t.contrastive.label_smoothing, where);
  read(j, "training_steps", t.training_steps, where);
  read(j, "temperature", t.contrastive.temperature, where);
  read(j, "normalize", t.contrastive.normalize, where);
  std::string objective = to_string(t.objective);
  read(j, "objective", objective, where);
  t.objective = parse_objective(objective);
  read(j, "train_size", t.train_size, where);
  read(j, "eval_size", t.eval_size, where);
}

void parse_task(const json& j, SyntheticTaskConfig& t) {
  check_keys(j, {"classes", "amplitude", "noise"}, "task");
  read(j, "classes", t.classes, "task");
  read(j, "amplitude", t.amplitude, "task");
  read(j, "noise", t.noise, "task");
}

void parse_bench(const json& j, BenchSettings& b) {
  check_keys(j, {"frames", "variants"}, "bench");
  if (j.contains("frames")) {
    const json& f = j.at("frames");
    if (!f.is_array()) throw ConfigError("bench.frames must be an array");
    b.frames.clear();
    for (const auto& x : f) {
      if (!x.is_number_integer()) throw ConfigError("bench.frames entries must be integers");
      b.frames.push_back(x.get<int>());
    }
  }
  if (j.contains("variants")) {
    const json& v = j.at("variants");
    if (!v.is_array()) throw ConfigError("bench.variants must be an array");
    b.variants.clear();
    for (const auto& x : v) {
      if (!x.is_string()) throw ConfigError("bench.variants entries must be strings");
      b.variants.push_back(parse_variant(x.get<std::string>()));
    }
  }
}

void parse_gradcheck(const json& j, GradcheckSettings& g) {
  const std::string where = "gradcheck";
  check_keys(j, {"step", "tolerance", "floor", "analytic_bias", "max_parameters", "batch_size"}, where);
  read(j, "step", g.options.step, where);
  read(j, "tolerance", g.options.tolerance, where);
  read(j, "floor", g.options.floor, where);
  read(j, "analytic_bias", g.options.analytic_bias, where);
  read(j, "max_parameters", g.max_parameters, where);
  read(j, "batch_size", g.batch_size, where);
  if (!(g.options.step > 0.0)) throw ConfigError("gradcheck.step must be positive");
  if (!(g.options.tolerance > 0.0)) throw ConfigError("gradcheck.tolerance must be positive");
  if (g.batch_size < 1) throw ConfigError("gradcheck.batch_size must be >= 1");
}

}  // namespace

std::string config_hash(const json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  check_keys(doc, {"seed", "model", "consolidation", "policy", "training", "task", "bench", "gradcheck", "paths"},
             "config");
  RunConfig cfg;
  read(doc, "seed", cfg.seed, "config");
  parse_model(section(doc, "model"), cfg.model);
  parse_consolidation(section(doc, "consolidation"), cfg.model.consolidation);
  parse_policy(section(doc, "policy"), cfg.model.policy);
  parse_training(section(doc, "training"), cfg.training);
  parse_task(section(doc, "task"), cfg.task);
  parse_bench(section(doc, "bench"), cfg.bench);
  parse_gradcheck(section(doc, "gradcheck"), cfg.gradcheck);

  const json& p = section(doc, "paths");
  check_keys(p, {"input", "output", "manifest", "metrics", "checkpoint", "report"}, "paths");
  cfg.paths = {resolve(p, "input", base_dir),   resolve(p, "output", base_dir),
               resolve(p, "manifest", base_dir), resolve(p, "metrics", base_dir),
               resolve(p, "checkpoint", base_dir), resolve(p, "report", base_dir)};

  // One user seed drives every stream through fixed splits.
  const Rng root(cfg.seed);
  cfg.model.consolidation.seed = root.split(1).seed();
  cfg.task.seed = root.split(2).seed();
  cfg.training.seed = root.split(3).seed();

  cfg.model.patch.validate();
  cfg.model.video.validate(cfg.model.patch);
  cfg.model.validate();
  cfg.training.validate();

  json hashed = doc;
  hashed.erase("paths");
  cfg.hash = config_hash(hashed);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

}  // namespace mcvit
