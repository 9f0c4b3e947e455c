#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gandistill/dataset.hpp"
#include "gandistill/losses.hpp"
#include "gandistill/metrics.hpp"
#include "gandistill/models.hpp"
#include "gandistill/optim.hpp"

namespace gandistill {

/// Which loss families are active. A masked term is never computed and is
/// reported as exactly 0.
struct LossMask {
  bool feat = true;    // L_KD_feat
  bool pix = true;     // L_KD_pix
  bool kd_adv = true;  // L_KD_S / L_KD_D
  bool gan = true;     // L_GAN_S / L_GAN_D

  bool needs_discriminator() const { return feat || kd_adv || gan; }
  bool needs_pairs() const { return feat || pix || kd_adv; }
  friend bool operator==(const LossMask&, const LossMask&) = default;
};

nlohmann::json to_json(const LossMask& m);

enum class TrainMode { kDistill, kGan };

struct TrainConfig {
  TrainMode mode = TrainMode::kDistill;
  std::int64_t total_g_steps = 20000;
  int d_steps_per_g = 10;
  int batch_size = 32;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  bool lr_decay = true;
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool use_real_data = true;

  LossWeights weights;
  /// Fraction of total_g_steps over which lambda1 decays to 0; 0 keeps it constant.
  double lambda1_decay_frac = 0.5;
  LossMask mask;

  // Filled from the generator spec by the trainer.
  int num_classes = 10;
  int z_dim = 128;
  // GAN mode draws fresh latents every step.
  double gan_truncation = std::numeric_limits<double>::infinity();
  std::vector<double> class_weights;  // empty: uniform

  std::int64_t eval_every = 500;
  int eval_samples = 1000;
  double eval_truncation = kDefaultTruncation;
  std::uint64_t eval_seed = 0x5eed;
  int is_splits = 10;

  std::int64_t checkpoint_every = 0;  // 0: only at the end (when a run dir is set)
  bool stop_on_collapse = false;
  double collapse_factor = 2.0;
  int collapse_patience = 3;

  void validate() const;
};

/// Linear learning-rate decay: lr0 * (1 - step / total).
double lr_at(std::int64_t step, double lr0, std::int64_t total);
double lr_at(std::int64_t step, const TrainConfig& cfg);

struct EvalPoint {
  std::int64_t step = 0;
  double fid = 0;
  double is_mean = 0;
  double is_std = 0;
};

struct StreamPosition {
  std::int64_t epoch = 0;
  std::int64_t cursor = 0;
};

struct TrainState {
  std::int64_t g_step = 0;
  std::int64_t d_step = 0;
  double lambda1 = 0;
  StreamPosition g_stream, d_stream, real_stream;
  std::vector<LossReport> losses;
  std::vector<EvalPoint> evals;

  bool finished = false;
  bool collapsed = false;
  std::string stop_reason;
  double best_fid = std::numeric_limits<double>::infinity();
  double worst_fid = 0;
  int evals_above = 0;

  std::optional<double> final_fid() const {
    if (evals.empty()) return std::nullopt;
    return evals.back().fid;
  }
};

/// Folds one eval into the collapse bookkeeping: collapsed once FID exceeds
/// factor x its running minimum for `patience` consecutive evals, or is not
/// finite. Returns state.collapsed.
bool track_collapse(TrainState& state, const EvalPoint& e, double factor, int patience);

nlohmann::json to_json(const LossReport& r);
nlohmann::json to_json(const EvalPoint& e);

/// Feature extractor plus the reference statistics FID is measured against.
struct EvalSetup {
  FeatureExtractor* extractor = nullptr;
  GaussianStats reference;
};

/// Owns one training run: models are borrowed, optimizers and data streams
/// are owned. Single-threaded and fully determined by the config and seeds.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, Generator<float>& g, Discriminator<float>* d,
          const DistillDataset* pairs, const DistillDataset* real, const EvalSetup* eval);
  ~Trainer();

  /// One generator update preceded by d_steps_per_g discriminator updates.
  void step();
  /// Runs until total_g_steps, `until` (if smaller) or a collapse stop.
  const TrainState& run(std::optional<std::int64_t> until = std::nullopt);

  EvalPoint evaluate();

  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }

  /// Enables metrics.jsonl and periodic checkpoints inside `dir`.
  void set_run_dir(const std::filesystem::path& dir);
  void save_checkpoint(const std::filesystem::path& path);
  /// Restores models, optimizers, streams and history; the checkpoint must
  /// have been produced with the same architecture.
  void load_checkpoint(const std::filesystem::path& path);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  TrainConfig cfg_;
  TrainState state_;
};

/// Distillation from stored teacher pairs (never calls a teacher oracle).
TrainState train_distill(const DistillDataset& pairs, const DistillDataset* real,
                         Generator<float>& g, Discriminator<float>& d, const TrainConfig& cfg,
                         const EvalSetup* eval = nullptr, const std::filesystem::path& run_dir = {});

/// Plain conditional GAN on real images only (the from-scratch baseline and
/// the way a desk-scale teacher is produced). Non-finite losses and FID
/// collapse end the run and are recorded in the state instead of throwing.
TrainState train_teacher_gan(const DistillDataset& real, Generator<float>& g,
                             Discriminator<float>& d, const TrainConfig& cfg,
                             const EvalSetup* eval = nullptr, const std::filesystem::path& run_dir = {});

/// Reference statistics for FID: embeddings of every image in `data`.
GaussianStats reference_stats(const DistillDataset& data, FeatureExtractor& fe);

/// Images from `g` in eval mode for a fixed, class-balanced latent set.
Tensor<float> generate_eval_images(Generator<float>& g, int count, int num_classes, double truncation,
                                   std::uint64_t seed, std::vector<int>* labels = nullptr);

}  // namespace gandistill
