#include "gandistill/teacher.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "gandistill/model_io.hpp"
#include "gandistill/random.hpp"

namespace gandistill {

std::atomic<std::int64_t> TeacherOracle::invocations_{0};

std::int64_t TeacherOracle::invocation_count() { return invocations_.load(); }

ImageTensor TeacherOracle::generate(const LatentVector& z, ClassLabel y) const {
  LatentSample s{z, y};
  return generate_batch(std::span<const LatentSample>(&s, 1));
}

ImageTensor TeacherOracle::generate_batch(std::span<const LatentSample> batch) const {
  for (const auto& s : batch)
    if (s.y.index < 0 || s.y.index >= num_classes())
      throw InvalidArgument("teacher: class index " + std::to_string(s.y.index) + " out of range");
  invocations_ += static_cast<std::int64_t>(batch.size());
  const int r = image_resolution();
  ImageTensor out(static_cast<int>(batch.size()), 3, r, r);
  render(batch, out.data());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void hsv_to_rgb(float h, float s, float v, float* rgb) {
  const float c = v * s;
  const float hp = std::fmod(h * 6.0f, 6.0f);
  const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
  float r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const float m = v - c;
  rgb[0] = r + m;
  rgb[1] = g + m;
  rgb[2] = b + m;
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

SyntheticTeacher::SyntheticTeacher(int num_classes, int resolution, std::uint64_t seed)
    : num_classes_(num_classes), resolution_(resolution) {
  if (num_classes < 1) throw InvalidArgument("synthetic teacher: num_classes must be >= 1");
  if (resolution != 16 && resolution != 32 && resolution != 64)
    throw InvalidArgument("synthetic teacher: resolution must be 16, 32 or 64, got " +
                          std::to_string(resolution));
  std::mt19937_64 rng(derive_seed(seed, {0x7eac}));
  std::uniform_real_distribution<float> jitter(-0.02f, 0.02f);
  constexpr float kGolden = 0.6180339887f;
  for (int c = 0; c < num_classes; ++c) {
    ClassStyle s{};
    // Hues repeat every five classes so colour alone cannot identify a class.
    const int hues = std::min(num_classes, 5);
    const float hue = std::fmod(static_cast<float>(c % hues) / static_cast<float>(hues) + 0.5f +
                                    jitter(rng),
                                1.0f);
    hsv_to_rgb(hue < 0 ? hue + 1.0f : hue, 0.85f, 0.95f, s.rgb);
    s.orientation = std::numbers::pi_v<float> * std::fmod(c * kGolden, 1.0f);
    s.frequency = 3.0f + static_cast<float>(c % 3);
    s.square = (c % 2) == 1;
    styles_.push_back(s);
  }
}

void SyntheticTeacher::render(std::span<const LatentSample> batch, float* out) const {
  const std::size_t stride = 3 * static_cast<std::size_t>(resolution_) * resolution_;
  for (std::size_t i = 0; i < batch.size(); ++i) render_one(batch[i].z, batch[i].y.index, out + i * stride);
}

void SyntheticTeacher::render_one(const LatentVector& zv, int y, float* out) const {
  if (zv.dim() < kLatentsUsed)
    throw InvalidArgument("synthetic teacher needs z_dim >= " + std::to_string(kLatentsUsed));
  const float* z = zv.values.data();
  const ClassStyle& st = styles_[y];
  const int r = resolution_;
  const float cx = 0.5f + 0.16f * std::tanh(z[0] / 1.5f);
  const float cy = 0.5f + 0.16f * std::tanh(z[1] / 1.5f);
  const float radius = 0.27f + 0.06f * std::tanh(z[2]);
  const float phase = 2.5f * z[3];
  const float freq = st.frequency * (1.0f + 0.2f * std::tanh(z[4]));
  const float bg = -0.55f + 0.25f * std::tanh(z[5]);
  const float bg_dir = z[6];
  const float bright = 0.8f + 0.15f * std::tanh(z[7]);
  const float edge = 0.6f / static_cast<float>(r);
  const float co = std::cos(st.orientation), so = std::sin(st.orientation);
  const float gx = std::cos(bg_dir), gy = std::sin(bg_dir);
  constexpr float kTwoPi = 2.0f * std::numbers::pi_v<float>;
  const std::size_t plane = static_cast<std::size_t>(r) * r;
  for (int row = 0; row < r; ++row) {
    const float v = (row + 0.5f) / r;
    for (int col = 0; col < r; ++col) {
      const float u = (col + 0.5f) / r;
      const float dx = u - cx, dy = v - cy;
      const float dist = st.square ? std::max(std::abs(dx), std::abs(dy)) * 1.1f
                                   : std::sqrt(dx * dx + dy * dy);
      const float mask = sigmoid((radius - dist) / edge);
      const float stripe =
          0.5f + 0.5f * std::tanh(3.0f * std::sin(kTwoPi * freq * (dx * co + dy * so) + phase));
      const float back = bg + 0.15f * ((u - 0.5f) * gx + (v - 0.5f) * gy);
      for (int ch = 0; ch < 3; ++ch) {
        const float obj = 2.0f * st.rgb[ch] * bright * (0.3f + 0.7f * stripe) - 1.0f;
        const float px = mask * obj + (1.0f - mask) * back;
        out[ch * plane + static_cast<std::size_t>(row) * r + col] = std::clamp(px, -1.0f, 1.0f);
      }
    }
  }
}

std::unique_ptr<TeacherOracle> make_synthetic_teacher(int num_classes, int resolution,
                                                      std::uint64_t seed) {
  return std::make_unique<SyntheticTeacher>(num_classes, resolution, seed);
}

// ---------------------------------------------------------------------------

namespace {

class TrainedTeacher final : public TeacherOracle {
 public:
  explicit TrainedTeacher(std::unique_ptr<Generator<float>> g) : g_(std::move(g)) {}

  int image_resolution() const override { return g_->spec().output_resolution; }
  int num_classes() const override { return g_->spec().num_classes; }

 protected:
  void render(std::span<const LatentSample> batch, float* out) const override {
    if (batch.empty()) return;
    if (batch.front().z.dim() != g_->spec().z_dim)
      throw InvalidArgument("trained teacher expects z_dim " + std::to_string(g_->spec().z_dim));
    auto z = latents_to_tensor<float>(batch);
    auto labels = labels_of(batch);
    auto images = g_->forward(z, labels, Mode::kEval);
    std::copy(images.vec().begin(), images.vec().end(), out);
  }

 private:
  std::unique_ptr<Generator<float>> g_;
};

}  // namespace

std::unique_ptr<TeacherOracle> make_trained_teacher(const std::filesystem::path& checkpoint) {
  return std::make_unique<TrainedTeacher>(load_generator(checkpoint));
}

}  // namespace gandistill
