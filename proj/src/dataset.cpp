#include "gandistill/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "gandistill/errors.hpp"
#include "gandistill/io.hpp"
#include "gandistill/random.hpp"

namespace gandistill {

static_assert(std::endian::native == std::endian::little,
              "dataset shards are little-endian; big-endian hosts need byte swapping");

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifestName = "manifest.json";

std::string shard_name(std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "shard_%05zu.bin", k);
  return buf;
}

}  // namespace

std::size_t DatasetManifest::record_bytes() const {
  return 4 * static_cast<std::size_t>(z_dim) + 2 + 3 * static_cast<std::size_t>(resolution) * resolution;
}

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json shards = nlohmann::json::array();
  for (const auto& s : m.shards)
    shards.push_back({{"file", s.file}, {"records", s.records}, {"crc32", s.crc32}});
  return {{"format", "gandistill-pairs"},
          {"version", DatasetManifest::kVersion},
          {"num_classes", m.num_classes},
          {"samples_per_class", m.samples_per_class},
          {"z_dim", m.z_dim},
          {"resolution", m.resolution},
          {"channels", 3},
          {"truncation", std::isfinite(m.truncation) ? nlohmann::json(m.truncation) : nlohmann::json()},
          {"seed", m.seed},
          {"source", m.source},
          {"record_layout", "z:f32le[z_dim] class:u16le image:u8[3][R][R]"},
          {"shards", shards}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "gandistill-pairs")
      throw DataError("manifest: unknown format");
    if (j.at("version").get<int>() != DatasetManifest::kVersion)
      throw DataError("manifest: unsupported version " + j.at("version").dump());
    DatasetManifest m;
    m.num_classes = j.at("num_classes").get<int>();
    m.samples_per_class = j.at("samples_per_class").get<int>();
    m.z_dim = j.at("z_dim").get<int>();
    m.resolution = j.at("resolution").get<int>();
    // null marks untruncated latents
    m.truncation = j.at("truncation").is_null() ? std::numeric_limits<double>::infinity()
                                                : j.at("truncation").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.source = j.value("source", "");
    for (const auto& s : j.at("shards"))
      m.shards.push_back({s.at("file").get<std::string>(), s.at("records").get<std::int64_t>(),
                          s.at("crc32").get<std::uint32_t>()});
    if (m.num_classes < 1 || m.num_classes > 65535 || m.samples_per_class < 1 || m.z_dim < 1 ||
        m.resolution < 1)
      throw DataError("manifest: non-positive or out-of-range dimensions");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
}

std::uint8_t quantize_pixel(float v) {
  const float s = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
  return static_cast<std::uint8_t>(s);
}

float dequantize_pixel(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

// ---------------------------------------------------------------------------

DistillDataset synthesize_dataset(const TeacherOracle& oracle, int samples_per_class,
                                  std::uint64_t seed, const fs::path& out_dir,
                                  const SynthesisOptions& opts) {
  if (samples_per_class < 1) throw InvalidArgument("samples_per_class must be >= 1");
  if (opts.shard_size < 1) throw InvalidArgument("shard_size must be >= 1");
  if (opts.z_dim < 1) throw InvalidArgument("z_dim must be >= 1");
  if (!(opts.truncation > 0)) throw InvalidArgument("truncation must be > 0");

  DatasetManifest m;
  m.num_classes = oracle.num_classes();
  m.samples_per_class = samples_per_class;
  m.z_dim = opts.z_dim;
  m.resolution = oracle.image_resolution();
  m.truncation = opts.truncation;
  m.seed = seed;
  m.source = opts.source;
  if (m.num_classes > 65535) throw InvalidArgument("class index must fit in 16 bits");

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const std::int64_t total = m.total_records();
  const std::size_t rb = m.record_bytes();
  const std::size_t img_elems = 3 * static_cast<std::size_t>(m.resolution) * m.resolution;
  constexpr int kQueryBatch = 64;

  std::vector<fs::path> written;
  try {
    std::string shard;
    std::vector<LatentSample> pending;
    auto flush_queries = [&] {
      if (pending.empty()) return;
      ImageTensor imgs = oracle.generate_batch(pending);
      for (std::size_t k = 0; k < pending.size(); ++k) {
        const auto& s = pending[k];
        shard.append(reinterpret_cast<const char*>(s.z.values.data()), 4 * s.z.values.size());
        const auto cls = static_cast<std::uint16_t>(s.y.index);
        shard.append(reinterpret_cast<const char*>(&cls), 2);
        const float* px = imgs.sample(static_cast<int>(k));
        for (std::size_t e = 0; e < img_elems; ++e) {
          if (!std::isfinite(px[e])) throw DataError("teacher produced a non-finite pixel");
          shard.push_back(static_cast<char>(quantize_pixel(px[e])));
        }
      }
      pending.clear();
    };
    auto flush_shard = [&] {
      flush_queries();
      if (shard.empty()) return;
      ShardInfo info{shard_name(m.shards.size()), static_cast<std::int64_t>(shard.size() / rb),
                     crc32_of(shard)};
      const fs::path p = out_dir / info.file;
      written.push_back(p);
      write_file_atomic(p, shard);
      m.shards.push_back(info);
      shard.clear();
    };

    shard.reserve(rb * std::min<std::int64_t>(opts.shard_size, total));
    std::int64_t in_shard = 0;
    for (int c = 0; c < m.num_classes; ++c) {
      for (int i = 0; i < samples_per_class; ++i) {
        pending.push_back({sample_truncated_normal(derive_seed(seed, {static_cast<std::uint64_t>(c),
                                                                      static_cast<std::uint64_t>(i)}),
                                                   m.z_dim, m.truncation),
                           ClassLabel{c}});
        if (static_cast<int>(pending.size()) == kQueryBatch) flush_queries();
        if (++in_shard == opts.shard_size) {
          flush_shard();
          in_shard = 0;
        }
      }
    }
    flush_shard();
    write_file_atomic(out_dir / kManifestName, to_json(m).dump(2) + "\n");
  } catch (...) {
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
  return DistillDataset::open(out_dir);
}

// ---------------------------------------------------------------------------

DistillDataset DistillDataset::open(const fs::path& dir) {
  DistillDataset d;
  const fs::path mpath = dir / kManifestName;
  if (!fs::exists(mpath)) throw DataError("no dataset manifest at " + mpath.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(mpath));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest " + mpath.string() + ": " + e.what());
  }
  d.manifest_ = manifest_from_json(j);
  const auto& m = d.manifest_;

  std::int64_t counted = 0;
  for (const auto& s : m.shards) counted += s.records;
  if (counted != m.total_records())
    throw DataError("manifest counts disagree: shards hold " + std::to_string(counted) +
                    " records, expected " + std::to_string(m.total_records()));

  const std::size_t rb = m.record_bytes();
  const std::size_t img = 3 * static_cast<std::size_t>(m.resolution) * m.resolution;
  d.z_.reserve(static_cast<std::size_t>(counted) * m.z_dim);
  d.labels_.reserve(static_cast<std::size_t>(counted));
  d.pixels_.reserve(static_cast<std::size_t>(counted) * img);

  for (const auto& s : m.shards) {
    std::string bytes;
    try {
      bytes = read_file(dir / s.file);
    } catch (const IoError&) {
      throw DataError("shard " + s.file + " is missing or unreadable");
    }
    if (bytes.size() != static_cast<std::size_t>(s.records) * rb)
      throw DataError("shard " + s.file + " has wrong size (truncated or corrupt)");
    if (crc32_of(bytes) != s.crc32) throw DataError("shard " + s.file + " failed its checksum (corrupt)");
    for (std::int64_t r = 0; r < s.records; ++r) {
      const char* p = bytes.data() + static_cast<std::size_t>(r) * rb;
      const std::size_t z0 = d.z_.size();
      d.z_.resize(z0 + m.z_dim);
      std::memcpy(d.z_.data() + z0, p, 4 * static_cast<std::size_t>(m.z_dim));
      for (int k = 0; k < m.z_dim; ++k)
        if (!std::isfinite(d.z_[z0 + k])) throw DataError("shard " + s.file + " holds a non-finite latent");
      std::uint16_t cls;
      std::memcpy(&cls, p + 4 * m.z_dim, 2);
      if (cls >= m.num_classes) throw DataError("shard " + s.file + " holds an out-of-range class");
      d.labels_.push_back(cls);
      const auto* px = reinterpret_cast<const std::uint8_t*>(p + 4 * m.z_dim + 2);
      d.pixels_.insert(d.pixels_.end(), px, px + img);
    }
  }
  return d;
}

PairedSample DistillDataset::record(std::int64_t i) const {
  if (i < 0 || i >= size()) throw InvalidArgument("record index out of range");
  PairedSample s;
  const auto zd = static_cast<std::size_t>(manifest_.z_dim);
  s.z.values.assign(z_.begin() + i * zd, z_.begin() + (i + 1) * zd);
  s.z.truncation = manifest_.truncation;
  s.y.index = labels_[i];
  const int r = manifest_.resolution;
  s.image.resize(1, 3, r, r);
  const std::size_t img = s.image.size();
  for (std::size_t e = 0; e < img; ++e) s.image[e] = dequantize_pixel(pixels_[i * img + e]);
  return s;
}

std::vector<std::int64_t> DistillDataset::class_indices(int c) const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == c) out.push_back(static_cast<std::int64_t>(i));
  return out;
}

void DistillDataset::gather(std::span<const std::int64_t> idx, Tensor<float>& z,
                            std::vector<int>& labels, Tensor<float>& images) const {
  const int b = static_cast<int>(idx.size());
  const int r = manifest_.resolution;
  const auto zd = static_cast<std::size_t>(manifest_.z_dim);
  const std::size_t img = 3 * static_cast<std::size_t>(r) * r;
  z.resize(b, manifest_.z_dim);
  images.resize(b, 3, r, r);
  labels.resize(b);
  for (int k = 0; k < b; ++k) {
    const auto i = static_cast<std::size_t>(idx[k]);
    if (idx[k] < 0 || i >= labels_.size()) throw InvalidArgument("record index out of range");
    std::copy_n(z_.data() + i * zd, zd, z.sample(k));
    labels[k] = labels_[i];
    float* dst = images.sample(k);
    const std::uint8_t* src = pixels_.data() + i * img;
    for (std::size_t e = 0; e < img; ++e) dst[e] = dequantize_pixel(src[e]);
  }
}

// ---------------------------------------------------------------------------

PairLoader::PairLoader(const DistillDataset& data, int batch_size, std::uint64_t shuffle_seed)
    : data_(&data), batch_size_(batch_size), seed_(shuffle_seed) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (data.size() == 0) throw DataError("dataset is empty");
  build_order();
}

void PairLoader::build_order() {
  order_.resize(static_cast<std::size_t>(data_->size()));
  std::iota(order_.begin(), order_.end(), 0);
  std::mt19937_64 rng(derive_seed(seed_, {0x5ef1e, static_cast<std::uint64_t>(epoch_)}));
  for (std::size_t i = order_.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order_[i - 1], order_[pick(rng)]);
  }
}

int PairLoader::batches_per_epoch() const {
  return static_cast<int>((data_->size() + batch_size_ - 1) / batch_size_);
}

void PairLoader::seek(std::int64_t epoch, std::int64_t cursor) {
  if (epoch < 0 || cursor < 0 || cursor > data_->size()) throw InvalidArgument("loader seek out of range");
  epoch_ = epoch;
  cursor_ = cursor;
  build_order();
}

PairBatch PairLoader::next() {
  if (cursor_ >= data_->size()) {
    ++epoch_;
    cursor_ = 0;
    build_order();
  }
  const std::int64_t end = std::min<std::int64_t>(cursor_ + batch_size_, data_->size());
  PairBatch b;
  b.epoch = epoch_;
  data_->gather(std::span<const std::int64_t>(order_.data() + cursor_, end - cursor_), b.z, b.labels,
                b.images);
  cursor_ = end;
  return b;
}

std::vector<PairBatch> load_batches(const DistillDataset& data, int batch_size,
                                    std::uint64_t shuffle_seed, std::int64_t epoch) {
  PairLoader loader(data, batch_size, shuffle_seed);
  loader.seek(epoch, 0);
  std::vector<PairBatch> out;
  const int n = loader.batches_per_epoch();
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(loader.next());
  return out;
}

}  // namespace gandistill
