#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "gandistill/analysis.hpp"
#include "gandistill/classifier.hpp"
#include "gandistill/config.hpp"
#include "gandistill/dataset.hpp"
#include "gandistill/errors.hpp"
#include "gandistill/io.hpp"
#include "gandistill/model_io.hpp"
#include "gandistill/random.hpp"
#include "gandistill/teacher.hpp"
#include "gandistill/training.hpp"

namespace gandistill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kClassifierFile = "classifier.gdc";

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> overrides;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--set", sets, "Override a config key: KEY=VALUE (repeatable)");
  }

  RunConfig resolve() {
    auto all = overrides;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
      all.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    return RunConfig::parse_and_validate(config, all);
  }

  template <typename V>
  void flag_value(CLI::App* app, const char* flag, const char* key, const char* help) {
    auto* holder = new_holder<V>();
    app->add_option(flag, *holder, help)->each([this, key](const std::string& v) { overrides.emplace_back(key, v); });
  }

 private:
  template <typename V>
  V* new_holder() {
    holders_.push_back(std::make_shared<V>());
    return static_cast<V*>(holders_.back().get());
  }
  std::vector<std::shared_ptr<void>> holders_;
};

fs::path resolve_out(const RunConfig& cfg, const std::string& out) {
  if (!out.empty()) return out;
  if (!cfg.get<std::string>("out_dir").empty()) return cfg.get<std::string>("out_dir");
  return run_root() / cfg.get<std::string>("run_name");
}

std::unique_ptr<ConvClassifier> load_extractor(const std::vector<fs::path>& candidates, bool required) {
  for (const auto& p : candidates) {
    if (p.empty() || !fs::exists(p)) continue;
    ClassifierReport rep;
    auto net = load_classifier(p, &rep);
    if (rep.heldout_accuracy < kMinClassifierAccuracy)
      throw DataError("feature extractor " + p.string() + " has held-out accuracy " +
                      std::to_string(rep.heldout_accuracy) + ", below the required " +
                      std::to_string(kMinClassifierAccuracy));
    return net;
  }
  if (required) throw DataError("no feature extractor found (train one with `synth --real`, or pass --extractor)");
  return nullptr;
}

void adopt_dataset_shape(RunConfig& cfg, const DistillDataset& data) {
  cfg.set("z_dim", data.z_dim());
  cfg.set("num_classes", data.num_classes());
  cfg.set("resolution", data.resolution());
  cfg.validate();
}

void check_same_shape(const DistillDataset& a, const DistillDataset& b) {
  if (a.num_classes() != b.num_classes() || a.resolution() != b.resolution())
    throw DataError("pair and real datasets disagree on classes or resolution");
}

void write_json(const fs::path& path, const json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// --- subcommands -----------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string out;
  bool real = false;
  bool no_extractor = false;
};

int cmd_synth(SynthArgs& a) {
  RunConfig cfg = a.common.resolve();
  const fs::path out = a.out;
  const std::string teacher_name = cfg.get<std::string>("teacher");
  std::unique_ptr<TeacherOracle> oracle;
  if (teacher_name == "synthetic") {
    oracle = make_synthetic_teacher(cfg.get<int>("num_classes"), cfg.get<int>("resolution"),
                                    cfg.get<std::uint64_t>("teacher_seed"));
  } else {
    oracle = make_trained_teacher(teacher_name.substr(std::string("checkpoint:").size()));
    cfg.set("num_classes", oracle->num_classes());
    cfg.set("resolution", oracle->image_resolution());
  }
  SynthesisOptions opts;
  opts.z_dim = cfg.get<int>("z_dim");
  opts.truncation = a.real ? std::numeric_limits<double>::infinity() : cfg.get<double>("truncation");
  opts.shard_size = cfg.get<int>("shard_size");
  opts.source = (a.real ? "real:" : "teacher:") + teacher_name;
  const auto before = TeacherOracle::invocation_count();
  const DistillDataset data =
      synthesize_dataset(*oracle, cfg.get<int>("samples_per_class"), cfg.get<std::uint64_t>("seed"), out, opts);
  cfg.echo(out);
  std::cout << "wrote " << data.size() << " records (" << data.num_classes() << " classes, "
            << data.resolution() << "px, " << data.manifest().shards.size() << " shards) to " << out.string()
            << "; teacher calls: " << TeacherOracle::invocation_count() - before << "\n";
  if (a.real && !a.no_extractor) {
    const ClassifierTrainConfig ccfg = cfg.classifier_config();
    ConvClassifier net(data.num_classes(), data.resolution(), ccfg.width, cfg.get<std::uint64_t>("seed"));
    const ClassifierReport rep = train_classifier(net, data, ccfg);
    save_classifier(out / kClassifierFile, net, rep);
    std::cout << "feature extractor: held-out accuracy " << rep.heldout_accuracy << " on " << rep.heldout_count
              << " images" << (rep.heldout_accuracy < kMinClassifierAccuracy ? " (BELOW the 0.95 requirement)" : "")
              << "\n";
    if (rep.heldout_accuracy < kMinClassifierAccuracy) return kExitData;
  }
  return kExitOk;
}

struct TrainArgs {
  Common common;
  std::string data, real_data, out, extractor, resume, arm = "full";
};

json summary_of(const TrainState& st) {
  json evals = json::array();
  for (const auto& e : st.evals) evals.push_back(to_json(e));
  return {{"g_steps", st.g_step},
          {"d_steps", st.d_step},
          {"collapsed", st.collapsed},
          {"stop_reason", st.stop_reason},
          {"final_fid", st.final_fid() ? json(*st.final_fid()) : json()},
          {"evals", evals}};
}

void print_trace(const TrainState& st) {
  for (const auto& e : st.evals)
    std::printf("step %8lld  FID %12.4f  IS %7.4f +- %.4f\n", static_cast<long long>(e.step), e.fid, e.is_mean,
                e.is_std);
}

int cmd_distill(TrainArgs& a) {
  RunConfig cfg = a.common.resolve();
  const DistillDataset pairs = DistillDataset::open(a.data);
  adopt_dataset_shape(cfg, pairs);
  std::optional<DistillDataset> real;
  if (!a.real_data.empty()) {
    real = DistillDataset::open(a.real_data);
    check_same_shape(pairs, *real);
  }
  const AblationArm arm = arm_from_name(a.arm);
  TrainConfig tc = arm_config(cfg.train_config(), arm);
  if (tc.use_real_data && tc.mask.gan && !real)
    throw ConfigError("use_real_data: set, but --real-data was not given (pass it or set use_real_data=false)");

  const fs::path out = resolve_out(cfg, a.out);
  cfg.echo(out);
  auto fe = load_extractor({a.extractor, a.real_data.empty() ? fs::path() : fs::path(a.real_data) / kClassifierFile,
                            fs::path(a.data) / kClassifierFile},
                           !a.extractor.empty());
  std::optional<EvalSetup> eval;
  if (fe) eval = EvalSetup{fe.get(), reference_stats(pairs, *fe)};
  else std::cerr << "note: no feature extractor found; training without FID evaluation\n";

  Generator<float> g(cfg.generator_spec(), cfg.get<std::uint64_t>("init_seed"));
  Discriminator<float> d(cfg.discriminator_spec(), derive_seed(cfg.get<std::uint64_t>("init_seed"), {0xd}));
  Trainer trainer(tc, g, &d, &pairs, real ? &*real : nullptr, eval ? &*eval : nullptr);
  if (!a.resume.empty()) trainer.load_checkpoint(a.resume);
  trainer.set_run_dir(out);
  const TrainState& st = trainer.run();
  save_generator(out / "generator.gdc", g);
  write_json(out / "summary.json", summary_of(st));
  print_trace(st);
  std::cout << "distill (" << arm.name << ") finished after " << st.g_step << " generator steps; run dir "
            << out.string() << "\n";
  return kExitOk;
}

int cmd_train_teacher(TrainArgs& a) {
  RunConfig cfg = a.common.resolve();
  const DistillDataset real = DistillDataset::open(a.real_data);
  adopt_dataset_shape(cfg, real);
  const fs::path out = resolve_out(cfg, a.out);
  cfg.echo(out);
  auto fe = load_extractor({a.extractor, fs::path(a.real_data) / kClassifierFile}, !a.extractor.empty());
  std::optional<EvalSetup> eval;
  if (fe) eval = EvalSetup{fe.get(), reference_stats(real, *fe)};

  TrainConfig tc = cfg.train_config();
  tc.mode = TrainMode::kGan;
  tc.mask = {.feat = false, .pix = false, .kd_adv = false, .gan = true};
  tc.use_real_data = true;
  Generator<float> g(cfg.generator_spec(), cfg.get<std::uint64_t>("init_seed"));
  Discriminator<float> d(cfg.discriminator_spec(), derive_seed(cfg.get<std::uint64_t>("init_seed"), {0xd}));
  Trainer trainer(tc, g, &d, nullptr, &real, eval ? &*eval : nullptr);
  if (!a.resume.empty()) trainer.load_checkpoint(a.resume);
  trainer.set_run_dir(out);
  const TrainState& st = trainer.run();
  save_generator(out / "generator.gdc", g);
  write_json(out / "summary.json", summary_of(st));
  print_trace(st);
  std::cout << "train-teacher finished after " << st.g_step << " generator steps"
            << (st.collapsed ? " (collapse recorded: " + st.stop_reason + ")" : std::string()) << "; generator at "
            << (out / "generator.gdc").string() << "\n";
  return kExitOk;
}

struct EvalArgs {
  Common common;
  std::string model, against = "teacher-data", teacher_data, real_data, metrics = "is,fid,intra-fid", out, extractor;
  int n_samples = 10000;
  int per_class = 100;
  std::uint64_t seed = 24301;
};

int cmd_eval(EvalArgs& a) {
  RunConfig cfg = a.common.resolve();
  const std::string ref_dir = a.against == "teacher-data" ? a.teacher_data : a.real_data;
  if (ref_dir.empty())
    throw ConfigError("--against " + a.against + " needs --" + (a.against == "teacher-data" ? "teacher-data" : "real-data") + " DIR");
  std::set<std::string> wanted;
  {
    std::stringstream ss(a.metrics);
    std::string m;
    while (std::getline(ss, m, ','))
      if (!m.empty()) {
        if (m != "is" && m != "fid" && m != "intra-fid") throw ConfigError("--metric: unknown metric '" + m + "'");
        wanted.insert(m);
      }
  }
  if (wanted.empty()) throw ConfigError("--metric: nothing to compute");
  auto g = load_generator(a.model);
  const DistillDataset ref = DistillDataset::open(ref_dir);
  if (ref.resolution() != g->spec().output_resolution || ref.num_classes() != g->spec().num_classes)
    throw DataError("reference data does not match the model's resolution/classes");
  auto fe = load_extractor({a.extractor, a.real_data.empty() ? fs::path() : fs::path(a.real_data) / kClassifierFile,
                            fs::path(ref_dir) / kClassifierFile},
                           true);
  const int nc = g->spec().num_classes;
  const double trunc = cfg.get<double>("eval_truncation");
  json report = {{"model", a.model}, {"against", a.against}, {"reference", ref_dir}, {"truncation", trunc}};
  if (wanted.count("is") || wanted.count("fid")) {
    const Tensor<float> imgs = generate_eval_images(*g, a.n_samples, nc, trunc, a.seed);
    report["n_samples"] = a.n_samples;
    if (wanted.count("fid")) {
      const FrechetDetail fd = frechet_distance_detail(reference_stats(ref, *fe), gaussian_stats(embed_all(*fe, imgs)));
      report["fid"] = fd.value;
      report["fid_clamp_amount"] = fd.clamped;
    }
    if (wanted.count("is")) {
      const ScoreSummary is = inception_score(classify_all(*fe, imgs), cfg.get<int>("is_splits"));
      report["is_mean"] = is.mean;
      report["is_std"] = is.std;
    }
  }
  if (wanted.count("intra-fid")) {
    std::vector<int> labels;
    const Tensor<float> imgs = generate_eval_images(*g, a.per_class * nc, nc, trunc, derive_seed(a.seed, {1}), &labels);
    Eigen::MatrixXd ref_feats(ref.size(), fe->feature_dim());
    std::vector<int> ref_labels(static_cast<std::size_t>(ref.size()));
    for (std::int64_t i = 0; i < ref.size(); ++i) ref_labels[i] = ref.label(i);
    {
      Tensor<float> z, im;
      std::vector<int> lab;
      std::vector<std::int64_t> idx;
      for (std::int64_t s = 0; s < ref.size(); s += 256) {
        const std::int64_t e = std::min<std::int64_t>(ref.size(), s + 256);
        idx.resize(e - s);
        for (std::int64_t i = s; i < e; ++i) idx[i - s] = i;
        ref.gather(idx, z, lab, im);
        ref_feats.middleRows(s, e - s) = fe->embed(im);
      }
    }
    const IntraFid intra = intra_fid_from_stats(class_stats(ref_feats, ref_labels, nc),
                                                class_stats(embed_all(*fe, imgs), labels, nc));
    report["intra_fid"] = intra.mean;
    report["intra_fid_per_class"] = intra.per_class;
    report["per_class"] = a.per_class;
  }
  if (!a.out.empty()) write_json(a.out, report);
  std::cout << report.dump() << "\n";
  return kExitOk;
}

struct AblateArgs {
  Common common;
  std::string data, real_data, out, extractor;
};

int cmd_ablate(AblateArgs& a) {
  RunConfig cfg = a.common.resolve();
  const DistillDataset pairs = DistillDataset::open(a.data);
  adopt_dataset_shape(cfg, pairs);
  std::optional<DistillDataset> real;
  if (!a.real_data.empty()) {
    real = DistillDataset::open(a.real_data);
    check_same_shape(pairs, *real);
  }
  const auto arms = parse_arms(cfg.get<std::string>("arms"));
  TrainConfig tc = cfg.train_config();
  if (tc.use_real_data && !real) throw ConfigError("use_real_data: set, but --real-data was not given");
  if (tc.eval_every <= 0) throw ConfigError("eval_every: ablation needs periodic evaluation (> 0)");
  auto fe = load_extractor({a.extractor, a.real_data.empty() ? fs::path() : fs::path(a.real_data) / kClassifierFile,
                            fs::path(a.data) / kClassifierFile},
                           true);
  const fs::path out = resolve_out(cfg, a.out);
  cfg.echo(out);
  AblationSetup setup;
  setup.pairs = &pairs;
  setup.real = real ? &*real : nullptr;
  setup.g_spec = cfg.generator_spec();
  setup.d_spec = cfg.discriminator_spec();
  setup.train = tc;
  setup.init_seed = cfg.get<std::uint64_t>("init_seed");
  setup.extractor = fe.get();
  setup.run_root = out;
  setup.intra_fid_per_class = cfg.get<int>("intra_fid_per_class");
  const auto rows = run_ablation(arms, setup);
  json table = json::array();
  for (const auto& r : rows) table.push_back(to_json(r));
  write_json(out / "ablation.json", {{"rows", table}});
  std::printf("%-10s %12s %12s %12s %s\n", "arm", "FID", "intra-FID", "HF energy", "");
  for (const auto& r : rows)
    std::printf("%-10s %12.4f %12.4f %12.6f %s\n", r.arm.c_str(), r.fid, r.intra_fid, r.hf_energy,
                r.collapsed ? "(collapsed)" : "");
  return kExitOk;
}

struct InterpArgs {
  Common common;
  std::string model, mode = "z", out;
  int steps = 0;
  int y1 = 0, y2 = 1;
  std::uint64_t seed = 0;
};

int cmd_interpolate(InterpArgs& a) {
  RunConfig cfg = a.common.resolve();
  auto g = load_generator(a.model);
  InterpolationSpec spec;
  if (a.mode == "z") spec.mode = InterpolationMode::kLatent;
  else if (a.mode == "y") spec.mode = InterpolationMode::kClassEmbedding;
  else throw ConfigError("--mode: expected z or y");
  spec.num_steps = a.steps > 0 ? a.steps : cfg.get<int>("interp_steps");
  const double trunc = cfg.get<double>("truncation");
  spec.z1 = sample_truncated_normal(derive_seed(a.seed, {1}), g->spec().z_dim, trunc);
  spec.z2 = sample_truncated_normal(derive_seed(a.seed, {2}), g->spec().z_dim, trunc);
  spec.y1 = {a.y1};
  spec.y2 = {a.mode == "z" ? a.y1 : a.y2};
  const InterpolationResult r = interpolate(*g, spec);
  const int res = g->spec().output_resolution, n = spec.num_steps;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(res) * res * n * 3);
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < res; ++y)
      for (int x = 0; x < res; ++x)
        for (int c = 0; c < 3; ++c)
          rgb[(static_cast<std::size_t>(y) * res * n + i * res + x) * 3 + c] = quantize_pixel(r.images.at(i, c, y, x));
  write_png(a.out, rgb, res * n, res);
  std::cout << "wrote " << n << " frames to " << a.out << "\n";
  return kExitOk;
}

struct GridArgs {
  Common common;
  std::string model, classes, out, data;
  int per_class = 8;
  std::uint64_t seed = 0;
};

int cmd_grid(GridArgs& a) {
  RunConfig cfg = a.common.resolve();
  auto g = load_generator(a.model);
  std::vector<int> classes;
  if (a.classes.empty()) {
    for (int c = 0; c < g->spec().num_classes; ++c) classes.push_back(c);
  } else {
    std::stringstream ss(a.classes);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        classes.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw ConfigError("--classes: '" + item + "' is not a class index");
      }
    }
  }
  std::optional<DistillDataset> pairs;
  if (!a.data.empty()) pairs = DistillDataset::open(a.data);
  const GridInfo info = sample_grid(*g, classes, a.per_class, a.seed, a.out, pairs ? &*pairs : nullptr,
                                    cfg.get<double>("truncation"));
  std::cout << "wrote " << info.rows << "x" << info.cols << " grid (" << info.width << "x" << info.height << ") to "
            << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Black-box distillation of conditional GAN generators"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Sample (z, y) pairs, query the teacher once and store the pairs");
  synth.common.add_to(s);
  s->add_option("--out", synth.out, "Dataset directory")->required();
  s->add_flag("--real", synth.real, "Untruncated latents; also trains the metric feature extractor");
  s->add_flag("--no-extractor", synth.no_extractor, "With --real: skip the feature extractor");
  synth.common.flag_value<std::string>(s, "--teacher", "teacher", "synthetic | checkpoint:PATH");
  synth.common.flag_value<int>(s, "--classes", "num_classes", "Number of classes");
  synth.common.flag_value<int>(s, "--per-class", "samples_per_class", "Samples per class");
  synth.common.flag_value<int>(s, "--seed", "seed", "Sampling seed");
  synth.common.flag_value<int>(s, "--z-dim", "z_dim", "Latent dimension");
  synth.common.flag_value<int>(s, "--resolution", "resolution", "Image size for the synthetic teacher");

  TrainArgs distill;
  auto* d = app.add_subcommand("distill", "Train a student from stored teacher pairs");
  distill.common.add_to(d);
  d->add_option("--data", distill.data, "Teacher pair dataset")->required()->check(CLI::ExistingDirectory);
  d->add_option("--real-data", distill.real_data, "Real image dataset")->check(CLI::ExistingDirectory);
  d->add_option("--out", distill.out, "Run directory");
  d->add_option("--extractor", distill.extractor, "Feature extractor checkpoint")->check(CLI::ExistingFile);
  d->add_option("--resume", distill.resume, "Training checkpoint to resume from")->check(CLI::ExistingFile);
  d->add_option("--arm", distill.arm, "Loss configuration: full, -gan, -feat, -kdadv, pix-only");
  distill.common.flag_value<int>(d, "--batch-size", "batch_size", "Batch size");
  distill.common.flag_value<std::int64_t>(d, "--steps", "total_g_steps", "Generator steps");
  distill.common.flag_value<int>(d, "--seed", "seed", "Training seed");

  TrainArgs teacher;
  auto* t = app.add_subcommand("train-teacher", "Train a conditional GAN on real images only");
  teacher.common.add_to(t);
  t->add_option("--real-data", teacher.real_data, "Real image dataset")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", teacher.out, "Run directory");
  t->add_option("--extractor", teacher.extractor, "Feature extractor checkpoint")->check(CLI::ExistingFile);
  t->add_option("--resume", teacher.resume, "Training checkpoint to resume from")->check(CLI::ExistingFile);
  teacher.common.flag_value<int>(t, "--batch-size", "batch_size", "Batch size");
  teacher.common.flag_value<std::int64_t>(t, "--steps", "total_g_steps", "Generator steps");
  teacher.common.flag_value<int>(t, "--seed", "seed", "Training seed");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "IS / FID / intra-FID of a generator");
  ev.common.add_to(e);
  e->add_option("--model", ev.model, "Generator or training checkpoint")->required()->check(CLI::ExistingFile);
  e->add_option("--against", ev.against, "teacher-data | real-data")->check(CLI::IsMember({"teacher-data", "real-data"}));
  e->add_option("--teacher-data", ev.teacher_data, "Teacher pair dataset")->check(CLI::ExistingDirectory);
  e->add_option("--real-data", ev.real_data, "Real image dataset")->check(CLI::ExistingDirectory);
  e->add_option("--metric", ev.metrics, "Comma list of is, fid, intra-fid");
  e->add_option("--n-samples", ev.n_samples, "Generated images for IS/FID")->check(CLI::Range(2, 10000000));
  e->add_option("--per-class", ev.per_class, "Generated images per class for intra-FID")->check(CLI::Range(2, 1000000));
  e->add_option("--seed", ev.seed, "Latent seed");
  e->add_option("--extractor", ev.extractor, "Feature extractor checkpoint")->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "Report file (JSON)");

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Train each loss-ablation arm from identical initial state");
  ab.common.add_to(a);
  a->add_option("--data", ab.data, "Teacher pair dataset")->required()->check(CLI::ExistingDirectory);
  a->add_option("--real-data", ab.real_data, "Real image dataset")->check(CLI::ExistingDirectory);
  a->add_option("--out", ab.out, "Run directory");
  a->add_option("--extractor", ab.extractor, "Feature extractor checkpoint")->check(CLI::ExistingFile);
  ab.common.flag_value<std::string>(a, "--arms", "arms", "Comma list: full,-gan,-feat,-kdadv,pix-only");
  ab.common.flag_value<std::int64_t>(a, "--steps", "total_g_steps", "Generator steps per arm");

  InterpArgs in;
  auto* i = app.add_subcommand("interpolate", "Latent or class-embedding interpolation strip");
  in.common.add_to(i);
  i->add_option("--model", in.model, "Generator checkpoint")->required()->check(CLI::ExistingFile);
  i->add_option("--mode", in.mode, "z | y")->check(CLI::IsMember({"z", "y"}));
  i->add_option("--steps", in.steps, "Frames")->check(CLI::Range(2, 10000));
  i->add_option("--y1", in.y1, "Start class");
  i->add_option("--y2", in.y2, "End class (mode y)");
  i->add_option("--seed", in.seed, "Latent seed");
  i->add_option("--out", in.out, "Output PNG")->required();

  GridArgs gr;
  auto* g = app.add_subcommand("grid", "Sample grid, optionally next to the stored teacher images");
  gr.common.add_to(g);
  g->add_option("--model", gr.model, "Generator checkpoint")->required()->check(CLI::ExistingFile);
  g->add_option("--classes", gr.classes, "Comma list of classes (default: all)");
  g->add_option("--per-class", gr.per_class, "Tiles per class")->check(CLI::Range(1, 1000));
  g->add_option("--seed", gr.seed, "Latent seed");
  g->add_option("--data", gr.data, "Teacher pairs for side-by-side tiles")->check(CLI::ExistingDirectory);
  g->add_option("--out", gr.out, "Output PNG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (d->parsed()) return cmd_distill(distill);
    if (t->parsed()) return cmd_train_teacher(teacher);
    if (e->parsed()) return cmd_eval(ev);
    if (a->parsed()) return cmd_ablate(ab);
    if (i->parsed()) return cmd_interpolate(in);
    if (g->parsed()) return cmd_grid(gr);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const InvalidArgument& err) {
    std::cerr << "invalid argument: " << err.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& err) {
    std::cerr << "numerical abort: " << err.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& err) {
    std::cerr << "checkpoint error: " << err.what() << "\n";
    return kExitData;
  } catch (const IoError& err) {
    std::cerr << "i/o error: " << err.what() << "\n";
    return kExitData;
  }
  std::cerr << app.help();
  return kExitConfig;
}

}  // namespace gandistill
