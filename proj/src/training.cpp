#include "gandistill/training.hpp"

#include <cmath>
#include <fstream>

#include "gandistill/checkpoint.hpp"
#include "gandistill/io.hpp"
#include "gandistill/model_io.hpp"
#include "gandistill/random.hpp"

namespace gandistill {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kGStream = 1, kDStream = 2, kRealStream = 3;
constexpr int kStateVersion = 1;

Tensor<float> concat(std::initializer_list<const Tensor<float>*> parts) {
  int n = 0;
  const Tensor<float>* first = nullptr;
  for (const auto* p : parts) {
    if (!p) continue;
    if (!first) first = p;
    n += p->n();
  }
  Tensor<float> out(n, first->c(), first->h(), first->w());
  float* dst = out.data();
  for (const auto* p : parts) {
    if (!p) continue;
    dst = std::copy(p->vec().begin(), p->vec().end(), dst);
  }
  return out;
}

Tensor<float> slice(const Tensor<float>& t, int start, int count) {
  Tensor<float> out(count, t.c(), t.h(), t.w());
  std::copy_n(t.sample(start), out.size(), out.data());
  return out;
}

template <typename V>
void append(std::vector<V>& dst, const std::vector<V>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

bool finite(const GeneratorTerms& g) {
  return std::isfinite(g.feat) && std::isfinite(g.pix) && std::isfinite(g.kd_s) && std::isfinite(g.gan_s);
}

bool finite(const DiscriminatorTerms& d) { return std::isfinite(d.kd_d) && std::isfinite(d.gan_d); }

nlohmann::json position_json(const StreamPosition& p) { return {p.epoch, p.cursor}; }
StreamPosition position_from(const nlohmann::json& j) { return {j.at(0).get<std::int64_t>(), j.at(1).get<std::int64_t>()}; }

}  // namespace

nlohmann::json to_json(const LossMask& m) {
  return {{"feat", m.feat}, {"pix", m.pix}, {"kd_adv", m.kd_adv}, {"gan", m.gan}};
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw InvalidArgument(key + ": " + why);
  };
  if (total_g_steps < 1) fail("total_g_steps", "must be >= 1");
  if (d_steps_per_g < 1) fail("d_steps_per_g", "must be >= 1");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(lr_g > 0) || !std::isfinite(lr_g)) fail("lr_g", "must be > 0");
  if (!(lr_d > 0) || !std::isfinite(lr_d)) fail("lr_d", "must be > 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1)) fail("adam_beta1", "must be in [0, 1)");
  if (!(adam.beta2 >= 0 && adam.beta2 < 1)) fail("adam_beta2", "must be in [0, 1)");
  if (!(adam.eps > 0)) fail("adam_eps", "must be > 0");
  if (!(lambda1_decay_frac >= 0 && lambda1_decay_frac <= 1)) fail("lambda1_decay_frac", "must be in [0, 1]");
  if (eval_every < 0) fail("eval_every", "must be >= 0");
  if (eval_every > 0 && eval_samples < 2 * is_splits) fail("eval_samples", "must be >= 2 * is_splits");
  if (is_splits < 1) fail("is_splits", "must be >= 1");
  if (!(eval_truncation > 0)) fail("eval_truncation", "must be > 0");
  if (!(gan_truncation > 0)) fail("gan_truncation", "must be > 0");
  if (checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");
  if (!(collapse_factor > 1)) fail("collapse_factor", "must be > 1");
  if (collapse_patience < 1) fail("collapse_patience", "must be >= 1");
  if (!mask.feat && !mask.pix && !mask.kd_adv && !mask.gan) fail("arm", "at least one generator loss must be active");
  if (mode == TrainMode::kGan && (mask.feat || mask.pix || mask.kd_adv || !mask.gan))
    fail("arm", "GAN mode trains with the real-data adversarial loss only");
  if (mode == TrainMode::kGan && !use_real_data) fail("use_real_data", "GAN mode needs real data");
  if (!class_weights.empty() && static_cast<int>(class_weights.size()) != num_classes)
    fail("class_weights", "needs one weight per class");
}

double lr_at(std::int64_t step, double lr0, std::int64_t total) {
  if (total < 1) throw InvalidArgument("lr_at: total must be >= 1");
  if (step < 0 || step > total) throw InvalidArgument("lr_at: step outside [0, total]");
  return lr0 * (1.0 - static_cast<double>(step) / static_cast<double>(total));
}

double lr_at(std::int64_t step, const TrainConfig& cfg) {
  return cfg.lr_decay ? lr_at(step, cfg.lr_g, cfg.total_g_steps) : cfg.lr_g;
}

nlohmann::json to_json(const LossReport& r) {
  return {{"step", r.step},         {"feat", r.g.feat},   {"pix", r.g.pix},
          {"kd_s", r.g.kd_s},       {"gan_s", r.g.gan_s}, {"kd_d", r.d.kd_d},
          {"gan_d", r.d.gan_d},     {"lambda1", r.lambda1}, {"total_g", r.total_g},
          {"total_d", r.total_d}};
}

nlohmann::json to_json(const EvalPoint& e) {
  return {{"step", e.step}, {"fid", e.fid}, {"is_mean", e.is_mean}, {"is_std", e.is_std}};
}

namespace {

LossReport report_from(const nlohmann::json& j) {
  LossReport r;
  r.step = j.at("step").get<std::int64_t>();
  r.g = {j.at("feat").get<double>(), j.at("pix").get<double>(), j.at("kd_s").get<double>(),
         j.at("gan_s").get<double>()};
  r.d = {j.at("kd_d").get<double>(), j.at("gan_d").get<double>()};
  r.lambda1 = j.at("lambda1").get<double>();
  r.total_g = j.at("total_g").get<double>();
  r.total_d = j.at("total_d").get<double>();
  return r;
}

EvalPoint eval_from(const nlohmann::json& j) {
  return {j.at("step").get<std::int64_t>(), j.at("fid").get<double>(), j.at("is_mean").get<double>(),
          j.at("is_std").get<double>()};
}

}  // namespace

// ---------------------------------------------------------------------------

GaussianStats reference_stats(const DistillDataset& data, FeatureExtractor& fe) {
  Eigen::MatrixXd feats(data.size(), fe.feature_dim());
  Tensor<float> z, images;
  std::vector<int> labels;
  std::vector<std::int64_t> idx;
  for (std::int64_t start = 0; start < data.size(); start += 256) {
    const std::int64_t end = std::min<std::int64_t>(data.size(), start + 256);
    idx.resize(static_cast<std::size_t>(end - start));
    for (std::int64_t i = start; i < end; ++i) idx[i - start] = i;
    data.gather(idx, z, labels, images);
    feats.middleRows(start, end - start) = fe.embed(images);
  }
  return gaussian_stats(feats);
}

Tensor<float> generate_eval_images(Generator<float>& g, int count, int num_classes, double truncation,
                                   std::uint64_t seed, std::vector<int>* labels_out) {
  const int z_dim = g.spec().z_dim;
  const int r = g.spec().output_resolution;
  Tensor<float> out(count, 3, r, r);
  std::vector<int> all_labels;
  constexpr int kChunk = 100;
  for (int start = 0; start < count; start += kChunk) {
    const int b = std::min(kChunk, count - start);
    Tensor<float> z(b, z_dim);
    std::vector<int> labels(b);
    for (int k = 0; k < b; ++k) {
      const int i = start + k;
      const auto lv = sample_truncated_normal(derive_seed(seed, {static_cast<std::uint64_t>(i)}), z_dim, truncation);
      std::copy(lv.values.begin(), lv.values.end(), z.sample(k));
      labels[k] = i % num_classes;
    }
    const Tensor<float> imgs = g.forward(z, labels, Mode::kEval);
    std::copy(imgs.vec().begin(), imgs.vec().end(), out.sample(start));
    append(all_labels, labels);
  }
  if (labels_out) *labels_out = std::move(all_labels);
  return out;
}

// ---------------------------------------------------------------------------

struct Trainer::Impl {
  Generator<float>& g;
  Discriminator<float>* d;
  const DistillDataset* pairs;
  const DistillDataset* real;
  const EvalSetup* eval;
  LossMask mask;  // effective mask
  Adam<float> opt_g;
  Adam<float> opt_d;
  std::unique_ptr<PairLoader> g_loader, d_loader, real_loader;
  fs::path run_dir;
  std::ofstream log;

  Impl(Generator<float>& g_, Discriminator<float>* d_, const DistillDataset* p, const DistillDataset* r,
       const EvalSetup* e, const TrainConfig& cfg)
      : g(g_), d(d_), pairs(p), real(r), eval(e), opt_g(g_.params(), cfg.adam) {
    if (d) opt_d = Adam<float>(d->params(), cfg.adam);
  }

  void log_line(const nlohmann::json& j) {
    if (log.is_open()) log << j.dump() << '\n';
  }
};

Trainer::Trainer(const TrainConfig& cfg, Generator<float>& g, Discriminator<float>* d,
                 const DistillDataset* pairs, const DistillDataset* real, const EvalSetup* eval)
    : cfg_(cfg) {
  cfg_.num_classes = g.spec().num_classes;
  cfg_.z_dim = g.spec().z_dim;
  cfg_.validate();
  LossMask mask = cfg_.mask;
  mask.gan = mask.gan && cfg_.use_real_data;
  if (!mask.feat && !mask.pix && !mask.kd_adv && !mask.gan)
    throw InvalidArgument("arm: no generator loss remains once real data is disabled");
  if (mask.needs_discriminator() && !d) throw InvalidArgument("this arm needs a discriminator");
  if (cfg_.mode == TrainMode::kDistill && !pairs) throw InvalidArgument("distillation needs a pair dataset");
  if (mask.gan && !real) throw InvalidArgument("use_real_data is set but no real dataset was given");
  const GeneratorSpec& gs = g.spec();
  auto check_data = [&](const DistillDataset* data, const char* what) {
    if (!data) return;
    if (data->resolution() != gs.output_resolution || data->num_classes() != gs.num_classes)
      throw DataError(std::string(what) + " dataset does not match the generator's resolution/classes");
  };
  check_data(pairs, "pair");
  check_data(real, "real");
  if (pairs && pairs->z_dim() != gs.z_dim) throw DataError("pair dataset z_dim differs from the generator's");
  if (d && (d->spec().input_resolution != gs.output_resolution || d->spec().num_classes != gs.num_classes))
    throw InvalidArgument("discriminator and generator disagree on resolution/classes");
  if (cfg_.weights.alpha.empty() && d) cfg_.weights.alpha = geometric_alpha(d->spec().num_strided_layers);
  if (mask.feat) cfg_.weights.validate(d->spec().num_strided_layers);
  cfg_.weights.lambda1_schedule.horizon =
      static_cast<std::int64_t>(std::llround(cfg_.lambda1_decay_frac * static_cast<double>(cfg_.total_g_steps)));

  impl_ = std::make_unique<Impl>(g, mask.needs_discriminator() ? d : nullptr, pairs, real, eval, cfg_);
  impl_->mask = mask;
  if (cfg_.mode == TrainMode::kDistill) {
    impl_->g_loader = std::make_unique<PairLoader>(*pairs, cfg_.batch_size, derive_seed(cfg_.seed, {kGStream}));
    if (impl_->d) impl_->d_loader = std::make_unique<PairLoader>(*pairs, cfg_.batch_size, derive_seed(cfg_.seed, {kDStream}));
  }
  if (mask.gan) impl_->real_loader = std::make_unique<PairLoader>(*real, cfg_.batch_size, derive_seed(cfg_.seed, {kRealStream}));
  state_.lambda1 = decay_lambda1(0, cfg_.weights.lambda1_schedule);
}

Trainer::~Trainer() = default;

void Trainer::set_run_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string());
  impl_->run_dir = dir;
  impl_->log.open(dir / "metrics.jsonl", state_.g_step == 0 ? std::ios::trunc : std::ios::app);
  if (!impl_->log) throw IoError("cannot open metrics log in " + dir.string());
}

EvalPoint Trainer::evaluate() {
  if (!impl_->eval || !impl_->eval->extractor) throw InvalidArgument("evaluation needs a feature extractor");
  FeatureExtractor& fe = *impl_->eval->extractor;
  const Tensor<float> imgs = generate_eval_images(impl_->g, cfg_.eval_samples, impl_->g.spec().num_classes,
                                                  cfg_.eval_truncation, cfg_.eval_seed);
  EvalPoint e;
  e.step = state_.g_step;
  const Eigen::MatrixXd feats = embed_all(fe, imgs);
  if (!feats.allFinite()) {
    e.fid = std::numeric_limits<double>::infinity();
  } else {
    e.fid = frechet_distance(impl_->eval->reference, gaussian_stats(feats));
    const ScoreSummary is = inception_score(classify_all(fe, imgs), cfg_.is_splits);
    e.is_mean = is.mean;
    e.is_std = is.std;
  }
  return e;
}

void Trainer::step() {
  Impl& m = *impl_;
  const LossMask& mask = m.mask;
  const std::int64_t k = state_.g_step;
  const double lr_g = cfg_.lr_decay ? lr_at(k, cfg_.lr_g, cfg_.total_g_steps) : cfg_.lr_g;
  const double lr_d = cfg_.lr_decay ? lr_at(k, cfg_.lr_d, cfg_.total_g_steps) : cfg_.lr_d;
  const int nc = m.g.spec().num_classes;

  auto draw = [&](std::uint64_t stream, std::int64_t index, PairLoader* loader, Tensor<float>& z,
                  std::vector<int>& labels, Tensor<float>& teacher) {
    if (cfg_.mode == TrainMode::kDistill) {
      PairBatch b = loader->next();
      z = std::move(b.z);
      labels = std::move(b.labels);
      teacher = std::move(b.images);
    } else {
      const auto batch = make_batch(derive_seed(cfg_.seed, {stream, static_cast<std::uint64_t>(index)}),
                                    cfg_.batch_size, m.g.spec().z_dim, cfg_.gan_truncation, nc,
                                    cfg_.class_weights);
      z = latents_to_tensor<float>(batch);
      labels = labels_of(batch);
    }
  };

  auto nonfinite = [&](const std::string& what) {
    state_.collapsed = true;
    state_.stop_reason = "non-finite " + what + " at generator step " + std::to_string(k);
    if (cfg_.mode == TrainMode::kGan) {
      state_.finished = true;
      return;
    }
    if (!m.run_dir.empty()) {
      nlohmann::json dump = {{"reason", state_.stop_reason},
                             {"g_step", state_.g_step},
                             {"d_step", state_.d_step},
                             {"lambda1", state_.lambda1},
                             {"lr_g", lr_g},
                             {"lr_d", lr_d}};
      if (!state_.losses.empty()) dump["last_losses"] = to_json(state_.losses.back());
      write_file_atomic(m.run_dir / "abort_dump.json", dump.dump(2) + "\n");
      save_checkpoint(m.run_dir / "abort_state.gdc");
    }
    throw NumericalError(state_.stop_reason);
  };

  DiscriminatorTerms dt;
  if (m.d) {
    for (int j = 0; j < cfg_.d_steps_per_g; ++j) {
      Tensor<float> z, teacher;
      std::vector<int> labels;
      draw(kDStream, state_.d_step, m.d_loader.get(), z, labels, teacher);
      const Tensor<float> student = m.g.forward(z, labels, Mode::kTrain);
      const int b = student.n();

      PairBatch realb;
      if (mask.gan) realb = m.real_loader->next();
      const bool use_t = mask.kd_adv;
      const Tensor<float> input = concat({use_t ? &teacher : nullptr, &student, mask.gan ? &realb.images : nullptr});
      std::vector<int> all_labels;
      if (use_t) append(all_labels, labels);
      append(all_labels, labels);
      if (mask.gan) append(all_labels, realb.labels);

      dt = {};
      if (mask.kd_adv || mask.gan) {
        m.d->refresh_spectral();
        m.opt_d.zero_grad();
        const auto out = m.d->forward(input, all_labels);
        const int off_s = use_t ? b : 0;
        std::span<const float> scores(out.scores);
        std::span<const float> s_scores = scores.subspan(off_s, b);
        std::vector<float> grads(out.scores.size(), 0.0f);
        if (mask.kd_adv) {
          const auto l = adv_kd_d_loss<float>(scores.subspan(0, b), s_scores);
          dt.kd_d = l.value;
          for (int i = 0; i < b; ++i) {
            grads[i] += l.grad_real[i];
            grads[off_s + i] += l.grad_fake[i];
          }
        }
        if (mask.gan) {
          const int off_x = off_s + b;
          const int bx = realb.size();
          const auto l = real_gan_d_loss<float>(scores.subspan(off_x, bx), s_scores);
          dt.gan_d = l.value;
          const auto w = static_cast<float>(cfg_.weights.lambda4);
          for (int i = 0; i < bx; ++i) grads[off_x + i] += w * l.grad_real[i];
          for (int i = 0; i < b; ++i) grads[off_s + i] += w * l.grad_fake[i];
        }
        if (!finite(dt)) return nonfinite("discriminator loss");
        m.d->backward(grads, {});
        m.opt_d.step(lr_d);
      }
      ++state_.d_step;
    }
  }

  // Generator update.
  Tensor<float> z, teacher;
  std::vector<int> labels;
  draw(kGStream, k, m.g_loader.get(), z, labels, teacher);
  state_.lambda1 = decay_lambda1(k, cfg_.weights.lambda1_schedule);
  const Tensor<float> student = m.g.forward(z, labels, Mode::kTrain);
  const int b = student.n();
  Tensor<float> grad_s(b, student.c(), student.h(), student.w());
  GeneratorTerms gt;
  if (mask.pix) {
    const auto p = pixel_kd_loss<float>(teacher, student);
    gt.pix = p.value;
    grad_s.add_scaled(p.grad_student, static_cast<float>(state_.lambda1));
  }
  if (m.d) {
    m.d->refresh_spectral();
    const bool use_t = mask.feat;
    const Tensor<float> input = concat({use_t ? &teacher : nullptr, &student});
    std::vector<int> all_labels;
    if (use_t) append(all_labels, labels);
    append(all_labels, labels);
    const auto out = m.d->forward(input, all_labels);
    const int off_s = use_t ? b : 0;
    std::vector<float> grads(out.scores.size(), 0.0f);
    const std::span<const float> s_scores = std::span<const float>(out.scores).subspan(off_s, b);
    if (mask.kd_adv || mask.gan) {
      const auto l = adv_kd_g_loss<float>(s_scores);
      const double w = (mask.kd_adv ? cfg_.weights.lambda2 : 0.0) + (mask.gan ? cfg_.weights.lambda3 : 0.0);
      if (mask.kd_adv) gt.kd_s = l.value;
      if (mask.gan) gt.gan_s = l.value;
      for (int i = 0; i < b; ++i) grads[off_s + i] = static_cast<float>(w) * l.grad_fake[i];
    }
    FeatureStack<float> grad_features;
    if (mask.feat) {
      FeatureStack<float> tf, sf;
      for (const auto& tap : out.features) {
        tf.push_back(slice(tap, 0, b));
        sf.push_back(slice(tap, b, b));
      }
      const auto fl = feature_kd_loss<float>(tf, sf, cfg_.weights.alpha);
      gt.feat = fl.value;
      for (std::size_t i = 0; i < out.features.size(); ++i) {
        Tensor<float> full(out.features[i].n(), out.features[i].c(), out.features[i].h(), out.features[i].w());
        std::copy(fl.grad_student[i].vec().begin(), fl.grad_student[i].vec().end(), full.sample(b));
        grad_features.push_back(std::move(full));
      }
    }
    if (!finite(gt)) return nonfinite("generator loss");
    const Tensor<float> gx = m.d->backward(grads, grad_features);
    grad_s += slice(gx, off_s, b);
  }
  if (!finite(gt)) return nonfinite("generator loss");
  m.opt_g.zero_grad();
  m.g.backward(grad_s);
  m.opt_g.step(lr_g);

  LossWeights w = cfg_.weights;
  w.lambda1 = state_.lambda1;
  const LossReport rep = make_report(k, gt, dt, w);
  if (!std::isfinite(rep.total_g) || !std::isfinite(rep.total_d)) return nonfinite("weighted loss");
  state_.losses.push_back(rep);
  m.log_line([&] {
    auto j = to_json(rep);
    j["type"] = "loss";
    return j;
  }());
  ++state_.g_step;
}

bool track_collapse(TrainState& s, const EvalPoint& e, double factor, int patience) {
  if (!std::isfinite(e.fid)) {
    s.collapsed = true;
    s.worst_fid = e.fid;
    s.stop_reason = "non-finite generator output at step " + std::to_string(e.step);
    return true;
  }
  // worst_fid is the peak since the running minimum (frozen into a running max
  // once collapsed), so the untrained step-0 FID never stands in for a collapse.
  if (e.fid <= s.best_fid) {
    s.best_fid = e.fid;
    if (!s.collapsed) s.worst_fid = e.fid;
  } else {
    s.worst_fid = std::max(s.worst_fid, e.fid);
  }
  s.evals_above = e.fid > factor * s.best_fid ? s.evals_above + 1 : 0;
  if (s.evals_above >= patience && !s.collapsed) {
    s.collapsed = true;
    s.stop_reason = "FID above " + std::to_string(factor) + "x its minimum for " + std::to_string(patience) +
                    " evaluations";
  }
  return s.collapsed;
}

const TrainState& Trainer::run(std::optional<std::int64_t> until) {
  Impl& m = *impl_;
  const std::int64_t stop = std::min(cfg_.total_g_steps, until.value_or(cfg_.total_g_steps));
  const bool evals_on = cfg_.eval_every > 0 && m.eval && m.eval->extractor;

  auto do_eval = [&] {
    if (!evals_on) return;
    if (!state_.evals.empty() && state_.evals.back().step == state_.g_step) return;
    const EvalPoint e = evaluate();
    state_.evals.push_back(e);
    auto j = to_json(e);
    j["type"] = "eval";
    m.log_line(j);
    if (track_collapse(state_, e, cfg_.collapse_factor, cfg_.collapse_patience) && cfg_.stop_on_collapse)
      state_.finished = true;
  };

  if (state_.g_step == 0) do_eval();
  while (!state_.finished && state_.g_step < stop) {
    step();
    if (state_.finished) break;
    if (evals_on && (state_.g_step % cfg_.eval_every == 0 || state_.g_step == cfg_.total_g_steps)) do_eval();
    if (!m.run_dir.empty() && cfg_.checkpoint_every > 0 && state_.g_step % cfg_.checkpoint_every == 0)
      save_checkpoint(m.run_dir / "checkpoint.gdc");
  }
  if (state_.g_step >= cfg_.total_g_steps) {
    state_.finished = true;
    if (state_.stop_reason.empty()) state_.stop_reason = "completed";
  }
  if (state_.finished && !m.run_dir.empty()) save_checkpoint(m.run_dir / "checkpoint.gdc");
  if (m.log.is_open()) m.log.flush();
  return state_;
}

// ---------------------------------------------------------------------------

void Trainer::save_checkpoint(const fs::path& path) {
  Impl& m = *impl_;
  Container c;
  add_generator(c, m.g);
  c.header["kind"] = "train_state";
  c.header["train_state_version"] = kStateVersion;
  nlohmann::json st = {{"g_step", state_.g_step},
                       {"d_step", state_.d_step},
                       {"lambda1", state_.lambda1},
                       {"g_stream", position_json(m.g_loader ? StreamPosition{m.g_loader->epoch(), m.g_loader->cursor()} : StreamPosition{})},
                       {"d_stream", position_json(m.d_loader ? StreamPosition{m.d_loader->epoch(), m.d_loader->cursor()} : StreamPosition{})},
                       {"real_stream", position_json(m.real_loader ? StreamPosition{m.real_loader->epoch(), m.real_loader->cursor()} : StreamPosition{})},
                       {"finished", state_.finished},
                       {"collapsed", state_.collapsed},
                       {"stop_reason", state_.stop_reason},
                       {"best_fid", std::isfinite(state_.best_fid) ? nlohmann::json(state_.best_fid) : nlohmann::json()},
                       {"worst_fid", state_.worst_fid},
                       {"evals_above", state_.evals_above},
                       {"opt_g_steps", m.opt_g.steps()},
                       {"opt_d_steps", m.opt_d.steps()},
                       {"total_g_steps", cfg_.total_g_steps},
                       {"mask", to_json(m.mask)}};
  nlohmann::json losses = nlohmann::json::array(), evals = nlohmann::json::array();
  for (const auto& r : state_.losses) losses.push_back(to_json(r));
  for (const auto& e : state_.evals) evals.push_back(to_json(e));
  st["losses"] = std::move(losses);
  st["evals"] = std::move(evals);
  c.header["state"] = std::move(st);
  export_tensors(c, m.opt_g.state("opt_g"));
  if (m.d) {
    c.header["discriminator_spec"] = to_json(m.d->spec());
    export_tensors(c, m.d->params());
    export_tensors(c, m.d->buffers());
    export_tensors(c, m.opt_d.state("opt_d"));
  }
  write_container(path, c);
}

void Trainer::load_checkpoint(const fs::path& path) {
  Impl& m = *impl_;
  const Container c = read_container(path);
  if (c.header.value("kind", "") != "train_state") throw CheckpointError(path.string() + " is not a training checkpoint");
  if (c.header.value("train_state_version", -1) != kStateVersion)
    throw CheckpointError("training checkpoint version " + c.header.value("train_state_version", nlohmann::json()).dump() +
                          " unsupported (expected " + std::to_string(kStateVersion) + ")");
  try {
    if (generator_spec_from_json(c.header.at("generator_spec")) != m.g.spec())
      throw CheckpointError("checkpoint generator architecture differs from the configured one");
    if (m.d) {
      if (!c.header.contains("discriminator_spec") ||
          discriminator_spec_from_json(c.header.at("discriminator_spec")) != m.d->spec())
        throw CheckpointError("checkpoint discriminator architecture differs from the configured one");
    }
    const auto& st = c.header.at("state");
    if (st.at("total_g_steps").get<std::int64_t>() != cfg_.total_g_steps)
      throw CheckpointError("checkpoint was written for a different total_g_steps");

    import_tensors(c, m.g.params());
    import_tensors(c, m.g.buffers());
    import_tensors(c, m.opt_g.state("opt_g"));
    m.opt_g.set_steps(st.at("opt_g_steps").get<std::int64_t>());
    if (m.d) {
      import_tensors(c, m.d->params());
      import_tensors(c, m.d->buffers());
      import_tensors(c, m.opt_d.state("opt_d"));
      m.opt_d.set_steps(st.at("opt_d_steps").get<std::int64_t>());
    }
    TrainState s;
    s.g_step = st.at("g_step").get<std::int64_t>();
    s.d_step = st.at("d_step").get<std::int64_t>();
    s.lambda1 = st.at("lambda1").get<double>();
    s.g_stream = position_from(st.at("g_stream"));
    s.d_stream = position_from(st.at("d_stream"));
    s.real_stream = position_from(st.at("real_stream"));
    s.finished = st.at("finished").get<bool>();
    s.collapsed = st.at("collapsed").get<bool>();
    s.stop_reason = st.at("stop_reason").get<std::string>();
    s.best_fid = st.at("best_fid").is_null() ? std::numeric_limits<double>::infinity() : st.at("best_fid").get<double>();
    s.worst_fid = st.at("worst_fid").get<double>();
    s.evals_above = st.at("evals_above").get<int>();
    for (const auto& r : st.at("losses")) s.losses.push_back(report_from(r));
    for (const auto& e : st.at("evals")) s.evals.push_back(eval_from(e));
    if (m.g_loader) m.g_loader->seek(s.g_stream.epoch, s.g_stream.cursor);
    if (m.d_loader) m.d_loader->seek(s.d_stream.epoch, s.d_stream.cursor);
    if (m.real_loader) m.real_loader->seek(s.real_stream.epoch, s.real_stream.cursor);
    state_ = std::move(s);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("training checkpoint header: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

TrainState train_distill(const DistillDataset& pairs, const DistillDataset* real, Generator<float>& g,
                         Discriminator<float>& d, const TrainConfig& cfg, const EvalSetup* eval,
                         const fs::path& run_dir) {
  TrainConfig c = cfg;
  c.mode = TrainMode::kDistill;
  Trainer t(c, g, &d, &pairs, real, eval);
  if (!run_dir.empty()) t.set_run_dir(run_dir);
  return t.run();
}

TrainState train_teacher_gan(const DistillDataset& real, Generator<float>& g, Discriminator<float>& d,
                             const TrainConfig& cfg, const EvalSetup* eval, const fs::path& run_dir) {
  TrainConfig c = cfg;
  c.mode = TrainMode::kGan;
  c.mask = {.feat = false, .pix = false, .kd_adv = false, .gan = true};
  c.use_real_data = true;
  Trainer t(c, g, &d, nullptr, &real, eval);
  if (!run_dir.empty()) t.set_run_dir(run_dir);
  return t.run();
}

}  // namespace gandistill
