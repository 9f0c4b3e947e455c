#include "gandistill/config.hpp"

#include <cmath>
#include <cstdlib>
#include <functional>

#include "gandistill/errors.hpp"
#include "gandistill/io.hpp"
#include "gandistill/losses.hpp"

namespace gandistill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { kInt, kNum, kBool, kStr, kNumList };

struct KeySpec {
  const char* name;
  Kind kind;
  json def;
};

const std::vector<KeySpec>& table() {
  static const std::vector<KeySpec> t = {
      {"run_name", Kind::kStr, "run"},
      {"out_dir", Kind::kStr, ""},
      {"seed", Kind::kInt, 0},
      {"init_seed", Kind::kInt, 0},
      // sampling
      {"z_dim", Kind::kInt, 128},
      {"truncation", Kind::kNum, 2.0},
      {"num_classes", Kind::kInt, 10},
      {"class_weights", Kind::kNumList, json::array()},
      // teacher / data
      {"teacher", Kind::kStr, "synthetic"},
      {"teacher_seed", Kind::kInt, 0},
      {"resolution", Kind::kInt, 32},
      {"samples_per_class", Kind::kInt, 1000},
      {"shard_size", Kind::kInt, 1000},
      // models
      {"g_channel_multiplier", Kind::kInt, 8},
      {"g_embedding_dim", Kind::kInt, 128},
      {"g_conv_kind", Kind::kStr, "depthwise_separable"},
      {"d_channel_multiplier", Kind::kInt, 16},
      {"d_num_layers", Kind::kInt, 3},
      {"spectral_norm_iters", Kind::kInt, 1},
      // losses
      {"lambda1_init", Kind::kNum, 10.0},
      {"lambda1_decay_frac", Kind::kNum, 0.5},
      {"lambda2", Kind::kNum, 1.0},
      {"lambda3", Kind::kNum, 1.0},
      {"lambda4", Kind::kNum, 1.0},
      {"alpha_mode", Kind::kStr, "geometric"},
      {"alpha", Kind::kNumList, json::array()},
      // training
      {"total_g_steps", Kind::kInt, 20000},
      {"d_steps_per_g", Kind::kInt, 10},
      {"batch_size", Kind::kInt, 32},
      {"lr_g", Kind::kNum, 2e-4},
      {"lr_d", Kind::kNum, 2e-4},
      {"lr_decay", Kind::kBool, true},
      {"adam_beta1", Kind::kNum, 0.0},
      {"adam_beta2", Kind::kNum, 0.9},
      {"adam_eps", Kind::kNum, 1e-8},
      {"use_real_data", Kind::kBool, true},
      {"eval_every", Kind::kInt, 500},
      {"eval_samples", Kind::kInt, 1000},
      {"eval_truncation", Kind::kNum, 2.0},
      {"eval_seed", Kind::kInt, 24301},
      {"is_splits", Kind::kInt, 10},
      {"checkpoint_every", Kind::kInt, 1000},
      {"stop_on_collapse", Kind::kBool, false},
      {"collapse_factor", Kind::kNum, 2.0},
      {"collapse_patience", Kind::kInt, 3},
      // metric feature extractor
      {"classifier_width", Kind::kInt, 16},
      {"classifier_steps", Kind::kInt, 1000},
      {"classifier_batch", Kind::kInt, 64},
      {"classifier_lr", Kind::kNum, 1e-3},
      // analysis
      {"arms", Kind::kStr, "full,-gan,-feat,-kdadv,pix-only"},
      {"intra_fid_per_class", Kind::kInt, 100},
      {"interp_steps", Kind::kInt, 8},
  };
  return t;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : table())
    if (key == k.name) return &k;
  return nullptr;
}

[[noreturn]] void bad(const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); }

void check_type(const KeySpec& k, const json& v) {
  switch (k.kind) {
    case Kind::kInt:
      if (!v.is_number_integer()) bad(k.name, "expected an integer, got " + v.dump());
      break;
    case Kind::kNum:
      if (!v.is_number()) bad(k.name, "expected a number, got " + v.dump());
      break;
    case Kind::kBool:
      if (!v.is_boolean()) bad(k.name, "expected true or false, got " + v.dump());
      break;
    case Kind::kStr:
      if (!v.is_string()) bad(k.name, "expected a string, got " + v.dump());
      break;
    case Kind::kNumList:
      if (!v.is_array()) bad(k.name, "expected a list of numbers, got " + v.dump());
      for (const auto& e : v)
        if (!e.is_number()) bad(k.name, "expected a list of numbers, got " + v.dump());
      break;
  }
}

}  // namespace

int blocks_for_resolution(int resolution) {
  int blocks = 0;
  int r = 4;
  while (r < resolution) {
    r *= 2;
    ++blocks;
  }
  if (r != resolution || blocks < 1) throw ConfigError("resolution: must be 4 * 2^k with k >= 1, got " + std::to_string(resolution));
  return blocks;
}

fs::path run_root() {
  const char* env = std::getenv("GANDISTILL_RUN_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& k : table()) v.emplace_back(k.name);
    return v;
  }();
  return names;
}

RunConfig::RunConfig() : values_(json::object()) {
  for (const auto& k : table()) values_[k.name] = k.def;
}

void RunConfig::set(const std::string& key, const json& value) {
  const KeySpec* k = find_key(key);
  if (!k) bad(key, "unknown configuration key");
  json v = value;
  if (k->kind == Kind::kNum && v.is_number()) v = v.get<double>();
  check_type(*k, v);
  values_[key] = v;
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  RunConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) c.set(it.key(), it.value());
  c.validate();
  return c;
}

RunConfig RunConfig::parse_and_validate(const fs::path& file,
                                        const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig c;
  if (!file.empty()) {
    std::string text;
    try {
      text = read_file(file);
    } catch (const IoError&) {
      throw ConfigError("config: cannot read " + file.string());
    }
    json j;
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        j = json::parse(text);
      } catch (const json::exception& e) {
        throw ConfigError("config: " + file.string() + " is not valid JSON (" + e.what() + ")");
      }
      if (!j.is_object()) throw ConfigError("config: top level must be an object");
      for (auto it = j.begin(); it != j.end(); ++it) c.set(it.key(), it.value());
    }
  }
  for (const auto& [key, raw] : overrides) {
    json v;
    try {
      v = json::parse(raw);
    } catch (const json::exception&) {
      v = raw;
    }
    c.set(key, v);
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  for (const auto& k : table()) {
    if (!values_.contains(k.name)) bad(k.name, "missing");
    check_type(k, values_.at(k.name));
  }
  for (auto it = values_.begin(); it != values_.end(); ++it)
    if (!find_key(it.key())) bad(it.key(), "unknown configuration key");

  auto positive_int = [&](const char* key) {
    if (get<std::int64_t>(key) < 1) bad(key, "must be >= 1");
  };
  auto non_negative_int = [&](const char* key) {
    if (get<std::int64_t>(key) < 0) bad(key, "must be >= 0");
  };
  auto positive = [&](const char* key) {
    const double v = get<double>(key);
    if (!(v > 0) || !std::isfinite(v)) bad(key, "must be a finite number > 0");
  };
  auto non_negative = [&](const char* key) {
    const double v = get<double>(key);
    if (!(v >= 0) || !std::isfinite(v)) bad(key, "must be a finite number >= 0");
  };
  auto unit = [&](const char* key, bool open_top) {
    const double v = get<double>(key);
    if (!(v >= 0) || (open_top ? !(v < 1) : !(v <= 1))) bad(key, open_top ? "must be in [0, 1)" : "must be in [0, 1]");
  };

  for (const char* k : {"z_dim", "num_classes", "samples_per_class", "shard_size", "g_channel_multiplier",
                        "g_embedding_dim", "d_channel_multiplier", "d_num_layers", "spectral_norm_iters",
                        "total_g_steps", "d_steps_per_g", "batch_size", "is_splits", "collapse_patience",
                        "classifier_width", "classifier_steps", "classifier_batch", "intra_fid_per_class"})
    positive_int(k);
  for (const char* k : {"seed", "init_seed", "teacher_seed", "eval_every", "eval_seed", "checkpoint_every"})
    non_negative_int(k);
  for (const char* k : {"truncation", "eval_truncation", "lr_g", "lr_d", "adam_eps", "classifier_lr"}) positive(k);
  for (const char* k : {"lambda1_init", "lambda2", "lambda3", "lambda4"}) non_negative(k);
  unit("lambda1_decay_frac", false);
  unit("adam_beta1", true);
  unit("adam_beta2", true);
  if (get<std::int64_t>("interp_steps") < 2) bad("interp_steps", "must be >= 2");
  if (get<double>("collapse_factor") <= 1) bad("collapse_factor", "must be > 1");
  if (get<std::int64_t>("num_classes") > 65535) bad("num_classes", "must fit in 16 bits");
  if (get<std::int64_t>("eval_every") > 0 && get<std::int64_t>("eval_samples") < 2 * get<std::int64_t>("is_splits"))
    bad("eval_samples", "must be at least 2 * is_splits");
  blocks_for_resolution(get<int>("resolution"));
  if (get<int>("resolution") % 8 != 0) bad("resolution", "must be a multiple of 8");
  if (get<int>("d_num_layers") > 30 || (get<int>("resolution") >> get<int>("d_num_layers")) < 1)
    bad("d_num_layers", "too many strided layers for the resolution");

  const auto weights = get<std::vector<double>>("class_weights");
  if (!weights.empty()) {
    if (static_cast<std::int64_t>(weights.size()) != get<std::int64_t>("num_classes"))
      bad("class_weights", "needs one weight per class");
    double sum = 0;
    for (double w : weights) {
      if (!(w >= 0) || !std::isfinite(w)) bad("class_weights", "weights must be finite and >= 0");
      sum += w;
    }
    if (!(sum > 0)) bad("class_weights", "weights must not all be zero");
  }
  const std::string teacher = get<std::string>("teacher");
  if (teacher != "synthetic" && teacher.rfind("checkpoint:", 0) != 0)
    bad("teacher", "expected 'synthetic' or 'checkpoint:PATH'");
  try {
    conv_kind_from_string(get<std::string>("g_conv_kind"));
  } catch (const std::exception&) {
    bad("g_conv_kind", "expected 'standard' or 'depthwise_separable'");
  }
  AlphaMode mode;
  try {
    mode = alpha_mode_from_string(get<std::string>("alpha_mode"));
  } catch (const std::exception&) {
    bad("alpha_mode", "expected geometric, uniform or custom");
  }
  const auto alpha = get<std::vector<double>>("alpha");
  if (mode == AlphaMode::kCustom) {
    if (static_cast<int>(alpha.size()) != get<int>("d_num_layers")) bad("alpha", "needs one weight per discriminator layer");
    for (double a : alpha)
      if (!(a >= 0) || !std::isfinite(a)) bad("alpha", "weights must be finite and >= 0");
  } else if (!alpha.empty()) {
    bad("alpha", "only used with alpha_mode = custom");
  }
  try {
    parse_arms(get<std::string>("arms"));
  } catch (const std::exception& e) {
    bad("arms", e.what());
  }
}

GeneratorSpec RunConfig::generator_spec() const {
  GeneratorSpec s;
  s.z_dim = get<int>("z_dim");
  s.num_classes = get<int>("num_classes");
  s.embedding_dim = get<int>("g_embedding_dim");
  s.channel_multiplier = get<int>("g_channel_multiplier");
  s.output_resolution = get<int>("resolution");
  s.num_res_blocks = blocks_for_resolution(s.output_resolution);
  s.conv_kind = conv_kind_from_string(get<std::string>("g_conv_kind"));
  s.validate();
  return s;
}

DiscriminatorSpec RunConfig::discriminator_spec() const {
  DiscriminatorSpec s;
  s.channel_multiplier = get<int>("d_channel_multiplier");
  s.num_strided_layers = get<int>("d_num_layers");
  s.num_classes = get<int>("num_classes");
  s.spectral_norm_iters = get<int>("spectral_norm_iters");
  s.input_resolution = get<int>("resolution");
  return s;
}

std::vector<double> RunConfig::class_weights() const { return get<std::vector<double>>("class_weights"); }

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.total_g_steps = get<std::int64_t>("total_g_steps");
  t.d_steps_per_g = get<int>("d_steps_per_g");
  t.batch_size = get<int>("batch_size");
  t.lr_g = get<double>("lr_g");
  t.lr_d = get<double>("lr_d");
  t.lr_decay = get<bool>("lr_decay");
  t.adam = {get<double>("adam_beta1"), get<double>("adam_beta2"), get<double>("adam_eps")};
  t.seed = get<std::uint64_t>("seed");
  t.use_real_data = get<bool>("use_real_data");
  t.weights.lambda1 = get<double>("lambda1_init");
  t.weights.lambda1_schedule.initial = t.weights.lambda1;
  t.weights.lambda2 = get<double>("lambda2");
  t.weights.lambda3 = get<double>("lambda3");
  t.weights.lambda4 = get<double>("lambda4");
  const int layers = get<int>("d_num_layers");
  switch (alpha_mode_from_string(get<std::string>("alpha_mode"))) {
    case AlphaMode::kGeometric: t.weights.alpha = geometric_alpha(layers); break;
    case AlphaMode::kUniform: t.weights.alpha = uniform_alpha(layers); break;
    case AlphaMode::kCustom: t.weights.alpha = get<std::vector<double>>("alpha"); break;
  }
  t.lambda1_decay_frac = get<double>("lambda1_decay_frac");
  t.num_classes = get<int>("num_classes");
  t.z_dim = get<int>("z_dim");
  t.class_weights = class_weights();
  t.eval_every = get<std::int64_t>("eval_every");
  t.eval_samples = get<int>("eval_samples");
  t.eval_truncation = get<double>("eval_truncation");
  t.eval_seed = get<std::uint64_t>("eval_seed");
  t.is_splits = get<int>("is_splits");
  t.checkpoint_every = get<std::int64_t>("checkpoint_every");
  t.stop_on_collapse = get<bool>("stop_on_collapse");
  t.collapse_factor = get<double>("collapse_factor");
  t.collapse_patience = get<int>("collapse_patience");
  return t;
}

ClassifierTrainConfig RunConfig::classifier_config() const {
  ClassifierTrainConfig c;
  c.width = get<int>("classifier_width");
  c.steps = get<int>("classifier_steps");
  c.batch_size = get<int>("classifier_batch");
  c.lr = get<double>("classifier_lr");
  c.seed = get<std::uint64_t>("seed");
  return c;
}

void RunConfig::echo(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string());
  write_file_atomic(dir / "config.json", values_.dump(2) + "\n");
}

}  // namespace gandistill
