#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gandistill/dataset.hpp"
#include "gandistill/models.hpp"
#include "gandistill/training.hpp"

namespace gandistill {

struct AblationArm {
  std::string name;
  LossMask mask;
};

/// full, -gan, -feat, -kdadv, pix-only
std::vector<AblationArm> standard_arms();
/// Accepts the names above (also "pix" for pix-only); throws InvalidArgument otherwise.
AblationArm arm_from_name(const std::string& name);
std::vector<AblationArm> parse_arms(const std::string& comma_list);

/// Training config adjusted for an arm. The pixel-only arm keeps lambda1
/// constant: decaying its only loss to zero would stop training.
TrainConfig arm_config(const TrainConfig& base, const AblationArm& arm);

struct AblationSetup {
  const DistillDataset* pairs = nullptr;
  const DistillDataset* real = nullptr;
  GeneratorSpec g_spec;
  DiscriminatorSpec d_spec;
  TrainConfig train;
  std::uint64_t init_seed = 0;
  FeatureExtractor* extractor = nullptr;
  std::filesystem::path run_root;  // empty: no run directories
  int intra_fid_per_class = 100;
};

struct AblationRow {
  std::string arm;
  double fid = 0;        // final FID, or the worst observed one after a collapse
  double intra_fid = 0;  // vs the pair dataset, per class
  std::vector<double> per_class_fid;
  double hf_energy = 0;
  bool collapsed = false;
  std::uint32_t initial_state_hash = 0;
  std::vector<EvalPoint> trace;
};

/// Trains every arm from identical initial parameters and data order.
std::vector<AblationRow> run_ablation(const std::vector<AblationArm>& arms, const AblationSetup& setup);
nlohmann::json to_json(const AblationRow& row);

/// CRC-32 over every parameter and buffer of both models.
std::uint32_t model_state_hash(Generator<float>& g, Discriminator<float>* d);

/// Mean squared response of the 4-neighbour Laplacian over interior pixels.
double high_frequency_energy(const Tensor<float>& images);

enum class InterpolationMode { kLatent, kClassEmbedding };

struct InterpolationSpec {
  LatentVector z1, z2;
  ClassLabel y1, y2;
  int num_steps = 8;
  InterpolationMode mode = InterpolationMode::kLatent;
};

struct InterpolationResult {
  Tensor<float> images;      // (num_steps, 3, R, R)
  Tensor<float> latents;     // (num_steps, z_dim)
  Tensor<float> embeddings;  // (num_steps, embedding_dim)
  std::vector<double> t;
};

/// Frame i uses t = i / (num_steps - 1) and is generated on its own in eval
/// mode, so the endpoint frames match single-image generation bit for bit.
InterpolationResult interpolate(Generator<float>& g, const InterpolationSpec& spec);

/// Pearson correlation of two equally long lists (at least 3 entries).
double fid_correlation(std::span<const double> teacher_fids, std::span<const double> student_fids);

struct GridInfo {
  int width = 0;
  int height = 0;
  int rows = 0;
  int cols = 0;
};

/// Writes a PNG with one row per class. With `pairs`, each tile pair shows the
/// stored teacher image followed by the student's output for the same (z, y);
/// otherwise latents are drawn from `seed`.
GridInfo sample_grid(Generator<float>& g, std::span<const int> classes, int per_class, std::uint64_t seed,
                     const std::filesystem::path& out_path, const DistillDataset* pairs = nullptr,
                     double truncation = kDefaultTruncation);

/// Writes interleaved 8-bit RGB rows as a PNG.
void write_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& rgb, int width, int height);

}  // namespace gandistill
