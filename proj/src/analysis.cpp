#include "gandistill/analysis.hpp"

#include <cmath>
#include <sstream>

#include <zlib.h>

#include "gandistill/errors.hpp"
#include "gandistill/io.hpp"
#include "gandistill/random.hpp"

namespace gandistill {

namespace fs = std::filesystem;

std::vector<AblationArm> standard_arms() {
  return {arm_from_name("full"), arm_from_name("-gan"), arm_from_name("-feat"), arm_from_name("-kdadv"),
          arm_from_name("pix-only")};
}

AblationArm arm_from_name(const std::string& name) {
  LossMask m;
  if (name == "full") {
  } else if (name == "-gan") {
    m.gan = false;
  } else if (name == "-feat") {
    m.feat = false;
  } else if (name == "-kdadv") {
    m.kd_adv = false;
  } else if (name == "pix-only" || name == "pix") {
    m = {.feat = false, .pix = true, .kd_adv = false, .gan = false};
    return {"pix-only", m};
  } else {
    throw InvalidArgument("unknown ablation arm '" + name + "' (expected full, -gan, -feat, -kdadv, pix-only)");
  }
  return {name, m};
}

std::vector<AblationArm> parse_arms(const std::string& comma_list) {
  std::vector<AblationArm> arms;
  std::stringstream ss(comma_list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) arms.push_back(arm_from_name(item));
  if (arms.empty()) throw InvalidArgument("no ablation arms given");
  return arms;
}

TrainConfig arm_config(const TrainConfig& base, const AblationArm& arm) {
  TrainConfig c = base;
  c.mode = TrainMode::kDistill;
  c.mask = arm.mask;
  if (!arm.mask.needs_discriminator()) c.lambda1_decay_frac = 0.0;
  return c;
}

std::uint32_t model_state_hash(Generator<float>& g, Discriminator<float>* d) {
  std::string bytes;
  auto add = [&](const Tensor<float>& t) {
    bytes.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  };
  for (const auto& p : g.params()) add(*p.value);
  for (const auto& b : g.buffers()) add(*b.value);
  if (d) {
    for (const auto& p : d->params()) add(*p.value);
    for (const auto& b : d->buffers()) add(*b.value);
  }
  return crc32_of(bytes);
}

double high_frequency_energy(const Tensor<float>& images) {
  if (images.h() < 3 || images.w() < 3) throw InvalidArgument("high_frequency_energy: images smaller than 3x3");
  double sum = 0;
  std::int64_t count = 0;
  for (int n = 0; n < images.n(); ++n)
    for (int c = 0; c < images.c(); ++c)
      for (int y = 1; y + 1 < images.h(); ++y)
        for (int x = 1; x + 1 < images.w(); ++x) {
          const double lap = images.at(n, c, y - 1, x) + images.at(n, c, y + 1, x) + images.at(n, c, y, x - 1) +
                             images.at(n, c, y, x + 1) - 4.0 * images.at(n, c, y, x);
          sum += lap * lap;
          ++count;
        }
  if (count == 0) throw InvalidArgument("high_frequency_energy: no images");
  return sum / static_cast<double>(count);
}

std::vector<AblationRow> run_ablation(const std::vector<AblationArm>& arms, const AblationSetup& setup) {
  if (!setup.pairs) throw InvalidArgument("ablation needs the pair dataset");
  if (!setup.extractor) throw InvalidArgument("ablation needs a feature extractor");
  if (arms.empty()) throw InvalidArgument("no ablation arms given");
  const int nc = setup.g_spec.num_classes;
  EvalSetup eval{setup.extractor, reference_stats(*setup.pairs, *setup.extractor)};

  // Per-class reference statistics for intra-FID.
  std::vector<GaussianStats> ref_classes;
  {
    Eigen::MatrixXd feats(setup.pairs->size(), setup.extractor->feature_dim());
    std::vector<int> labels(static_cast<std::size_t>(setup.pairs->size()));
    Tensor<float> z, images;
    std::vector<int> lab;
    std::vector<std::int64_t> idx;
    for (std::int64_t s = 0; s < setup.pairs->size(); s += 256) {
      const std::int64_t e = std::min<std::int64_t>(setup.pairs->size(), s + 256);
      idx.resize(static_cast<std::size_t>(e - s));
      for (std::int64_t i = s; i < e; ++i) idx[i - s] = i;
      setup.pairs->gather(idx, z, lab, images);
      feats.middleRows(s, e - s) = setup.extractor->embed(images);
      std::copy(lab.begin(), lab.end(), labels.begin() + s);
    }
    ref_classes = class_stats(feats, labels, nc);
  }

  std::vector<AblationRow> rows;
  for (const auto& arm : arms) {
    Generator<float> g(setup.g_spec, setup.init_seed);
    Discriminator<float> d(setup.d_spec, derive_seed(setup.init_seed, {0xd}));
    AblationRow row;
    row.arm = arm.name;
    row.initial_state_hash = model_state_hash(g, &d);
    const TrainConfig cfg = arm_config(setup.train, arm);
    Trainer trainer(cfg, g, &d, setup.pairs, setup.real, &eval);
    if (!setup.run_root.empty()) trainer.set_run_dir(setup.run_root / arm.name);
    const TrainState& st = trainer.run();
    row.collapsed = st.collapsed;
    row.trace = st.evals;
    if (st.evals.empty()) throw InvalidArgument("ablation arms need eval_every > 0");
    row.fid = st.collapsed ? st.worst_fid : st.evals.back().fid;

    std::vector<int> labels;
    const Tensor<float> imgs = generate_eval_images(g, setup.intra_fid_per_class * nc, nc, cfg.eval_truncation,
                                                    cfg.eval_seed, &labels);
    row.hf_energy = high_frequency_energy(imgs);
    const Eigen::MatrixXd feats = embed_all(*setup.extractor, imgs);
    if (feats.allFinite()) {
      const IntraFid intra = intra_fid_from_stats(ref_classes, class_stats(feats, labels, nc));
      row.intra_fid = intra.mean;
      row.per_class_fid = intra.per_class;
    } else {
      row.intra_fid = std::numeric_limits<double>::infinity();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json to_json(const AblationRow& row) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : row.trace) trace.push_back(to_json(e));
  return {{"arm", row.arm},
          {"fid", row.fid},
          {"intra_fid", row.intra_fid},
          {"per_class_fid", row.per_class_fid},
          {"hf_energy", row.hf_energy},
          {"collapsed", row.collapsed},
          {"initial_state_hash", row.initial_state_hash},
          {"trace", trace}};
}

// ---------------------------------------------------------------------------

InterpolationResult interpolate(Generator<float>& g, const InterpolationSpec& spec) {
  const GeneratorSpec& gs = g.spec();
  if (spec.num_steps < 2) throw InvalidArgument("interpolation needs num_steps >= 2");
  if (spec.z1.dim() != gs.z_dim || spec.z2.dim() != gs.z_dim)
    throw InvalidArgument("interpolation endpoints must have z_dim " + std::to_string(gs.z_dim));
  for (int y : {spec.y1.index, spec.y2.index})
    if (y < 0 || y >= gs.num_classes) throw InvalidArgument("interpolation class out of range");

  InterpolationResult r;
  const int n = spec.num_steps;
  const int res = gs.output_resolution;
  r.images.resize(n, 3, res, res);
  r.latents.resize(n, gs.z_dim);
  r.embeddings.resize(n, gs.embedding_dim);
  const int ends[2] = {spec.y1.index, spec.y2.index};
  const Tensor<float> e = g.embed(ends);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    r.t.push_back(t);
    const auto a = static_cast<float>(1.0 - t), b = static_cast<float>(t);
    Tensor<float> z(1, gs.z_dim), emb(1, gs.embedding_dim);
    const bool move_z = spec.mode == InterpolationMode::kLatent;
    for (int k = 0; k < gs.z_dim; ++k)
      z[k] = move_z ? a * spec.z1.values[k] + b * spec.z2.values[k] : spec.z1.values[k];
    for (int k = 0; k < gs.embedding_dim; ++k)
      emb[k] = move_z ? e.at(0, k) : a * e.at(0, k) + b * e.at(1, k);
    const Tensor<float> img = g.forward_embedded(z, emb, Mode::kEval);
    std::copy(img.vec().begin(), img.vec().end(), r.images.sample(i));
    std::copy(z.vec().begin(), z.vec().end(), r.latents.sample(i));
    std::copy(emb.vec().begin(), emb.vec().end(), r.embeddings.sample(i));
  }
  return r;
}

double fid_correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("fid_correlation: lists differ in length");
  if (a.size() < 3) throw InvalidArgument("fid_correlation: need at least 3 classes");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0) || !(sbb > 0)) throw NumericalError("fid_correlation: undefined for a zero-variance list");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

namespace {

void put_be32(std::string& s, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
}

void put_chunk(std::string& out, const char* type, const std::string& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  put_be32(out, crc32_of(body));
}

}  // namespace

void write_png(const fs::path& path, const std::vector<std::uint8_t>& rgb, int width, int height) {
  if (width < 1 || height < 1 || rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw InvalidArgument("write_png: pixel buffer does not match the dimensions");
  std::string raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    raw.append(reinterpret_cast<const char*>(rgb.data()) + static_cast<std::size_t>(y) * width * 3,
               static_cast<std::size_t>(width) * 3);
  }
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::string packed(len, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &len, reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("png compression failed");
  packed.resize(len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(width));
  put_be32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", packed);
  put_chunk(out, "IEND", "");
  write_file_atomic(path, out);
}

GridInfo sample_grid(Generator<float>& g, std::span<const int> classes, int per_class, std::uint64_t seed,
                     const fs::path& out_path, const DistillDataset* pairs, double truncation) {
  const GeneratorSpec& gs = g.spec();
  if (classes.empty() || per_class < 1) throw InvalidArgument("sample_grid: need at least one class and tile");
  for (int c : classes)
    if (c < 0 || c >= gs.num_classes) throw InvalidArgument("sample_grid: class " + std::to_string(c) + " out of range");
  if (pairs && (pairs->resolution() != gs.output_resolution || pairs->z_dim() != gs.z_dim))
    throw InvalidArgument("sample_grid: teacher data does not match the generator");

  const int r = gs.output_resolution;
  const int tiles_per_sample = pairs ? 2 : 1;
  GridInfo info;
  info.rows = static_cast<int>(classes.size());
  info.cols = per_class * tiles_per_sample;
  constexpr int kGap = 2;
  info.width = info.cols * r + (info.cols + 1) * kGap;
  info.height = info.rows * r + (info.rows + 1) * kGap;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(info.width) * info.height * 3, 255);

  auto blit = [&](const float* chw, int row, int col) {
    const int x0 = kGap + col * (r + kGap), y0 = kGap + row * (r + kGap);
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x)
        for (int c = 0; c < 3; ++c)
          rgb[(static_cast<std::size_t>(y0 + y) * info.width + x0 + x) * 3 + c] =
              quantize_pixel(chw[(static_cast<std::size_t>(c) * r + y) * r + x]);
  };

  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    const int c = classes[ci];
    Tensor<float> z(per_class, gs.z_dim), teacher;
    std::vector<int> labels(per_class, c);
    if (pairs) {
      auto idx = pairs->class_indices(c);
      if (static_cast<int>(idx.size()) < per_class) throw DataError("sample_grid: too few teacher images for a class");
      idx.resize(per_class);
      std::vector<int> lab;
      pairs->gather(idx, z, lab, teacher);
    } else {
      for (int k = 0; k < per_class; ++k) {
        const auto lv = sample_truncated_normal(
            derive_seed(seed, {static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k)}), gs.z_dim, truncation);
        std::copy(lv.values.begin(), lv.values.end(), z.sample(k));
      }
    }
    const Tensor<float> student = g.forward(z, labels, Mode::kEval);
    for (int k = 0; k < per_class; ++k) {
      if (pairs) {
        blit(teacher.sample(k), static_cast<int>(ci), 2 * k);
        blit(student.sample(k), static_cast<int>(ci), 2 * k + 1);
      } else {
        blit(student.sample(k), static_cast<int>(ci), k);
      }
    }
  }
  write_png(out_path, rgb, info.width, info.height);
  return info;
}

}  // namespace gandistill
