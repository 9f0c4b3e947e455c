#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "gandistill/sampling.hpp"
#include "gandistill/teacher.hpp"

namespace gandistill {

struct PairedSample {
  LatentVector z;
  ClassLabel y;
  ImageTensor image;  // (1, 3, R, R)
};

struct ShardInfo {
  std::string file;
  std::int64_t records = 0;
  std::uint32_t crc32 = 0;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;

  int num_classes = 0;
  int samples_per_class = 0;
  int z_dim = 0;
  int resolution = 0;
  double truncation = kDefaultTruncation;
  std::uint64_t seed = 0;
  std::string source;
  std::vector<ShardInfo> shards;

  std::int64_t total_records() const {
    return static_cast<std::int64_t>(num_classes) * samples_per_class;
  }
  std::size_t record_bytes() const;
};

nlohmann::json to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

struct SynthesisOptions {
  int z_dim = 128;
  double truncation = kDefaultTruncation;
  int shard_size = 1000;
  std::string source = "unknown";
};

/// Pixel in [-1, 1] to its stored byte and back; round-trip error <= 1/255.
std::uint8_t quantize_pixel(float v);
float dequantize_pixel(std::uint8_t b);

/// In-memory view of a validated dataset directory.
class DistillDataset {
 public:
  static DistillDataset open(const std::filesystem::path& dir);

  const DatasetManifest& manifest() const { return manifest_; }
  std::int64_t size() const { return static_cast<std::int64_t>(labels_.size()); }
  int z_dim() const { return manifest_.z_dim; }
  int resolution() const { return manifest_.resolution; }
  int num_classes() const { return manifest_.num_classes; }

  PairedSample record(std::int64_t i) const;
  int label(std::int64_t i) const { return labels_[static_cast<std::size_t>(i)]; }
  /// Indices of all records with the given class, in storage order.
  std::vector<std::int64_t> class_indices(int c) const;

  /// Gathers records into packed tensors: z (B, z_dim), images (B, 3, R, R).
  void gather(std::span<const std::int64_t> idx, Tensor<float>& z, std::vector<int>& labels,
              Tensor<float>& images) const;

 private:
  DatasetManifest manifest_;
  std::vector<float> z_;
  std::vector<int> labels_;
  std::vector<std::uint8_t> pixels_;
};

/// Samples `samples_per_class` (z, y) pairs per class, queries the oracle and
/// writes manifest.json plus shards into `out_dir`. Records are class-major and
/// record (c, i) uses its own derived seed, so the z/y streams depend only on
/// `seed`. Partially written shards are removed if synthesis fails.
DistillDataset synthesize_dataset(const TeacherOracle& oracle, int samples_per_class,
                                  std::uint64_t seed, const std::filesystem::path& out_dir,
                                  const SynthesisOptions& opts = {});

struct PairBatch {
  Tensor<float> z;
  std::vector<int> labels;
  Tensor<float> images;
  std::int64_t epoch = 0;

  int size() const { return static_cast<int>(labels.size()); }
};

/// Epoch-based batch stream. Each epoch visits every record once in a
/// permutation derived from (shuffle_seed, epoch); the last batch of an epoch
/// may be short. Position is (epoch, cursor) so it can be checkpointed.
class PairLoader {
 public:
  PairLoader(const DistillDataset& data, int batch_size, std::uint64_t shuffle_seed);

  PairBatch next();

  std::int64_t epoch() const { return epoch_; }
  std::int64_t cursor() const { return cursor_; }
  void seek(std::int64_t epoch, std::int64_t cursor);
  int batches_per_epoch() const;

 private:
  void build_order();

  const DistillDataset* data_;
  int batch_size_;
  std::uint64_t seed_;
  std::int64_t epoch_ = 0;
  std::int64_t cursor_ = 0;
  std::vector<std::int64_t> order_;
};

/// All batches of one epoch in order.
std::vector<PairBatch> load_batches(const DistillDataset& data, int batch_size,
                                    std::uint64_t shuffle_seed, std::int64_t epoch = 0);

}  // namespace gandistill
