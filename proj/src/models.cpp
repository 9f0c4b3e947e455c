#include "gandistill/models.hpp"

#include <cmath>
#include <random>

#include "gandistill/random.hpp"

namespace gandistill {

std::string to_string(ConvKind kind) {
  return kind == ConvKind::kStandard ? "standard" : "depthwise_separable";
}

ConvKind conv_kind_from_string(const std::string& s) {
  if (s == "standard" || s == "std") return ConvKind::kStandard;
  if (s == "depthwise_separable" || s == "dw") return ConvKind::kDepthwiseSeparable;
  throw InvalidArgument("unknown conv kind '" + s + "' (expected standard|depthwise_separable)");
}

std::int64_t conv_weight_count(ConvKind kind, int in, int out, int kernel) {
  if (kind == ConvKind::kStandard) return std::int64_t(in) * out * kernel * kernel;
  return std::int64_t(in) * kernel * kernel + std::int64_t(in) * out;
}

// ---------------------------------------------------------------------------
// Specs

void GeneratorSpec::validate() const {
  if (z_dim < 1) throw InvalidArgument("generator: z_dim must be >= 1");
  if (num_classes < 1) throw InvalidArgument("generator: num_classes must be >= 1");
  if (embedding_dim < 1) throw InvalidArgument("generator: embedding_dim must be >= 1");
  if (channel_multiplier < 1) throw InvalidArgument("generator: channel_multiplier must be >= 1");
  if (num_res_blocks < 1 || num_res_blocks > 8)
    throw InvalidArgument("generator: num_res_blocks must be in [1, 8]");
  if (output_resolution != (kBaseResolution << num_res_blocks))
    throw InvalidArgument("generator: output_resolution " + std::to_string(output_resolution) +
                          " inconsistent with " + std::to_string(num_res_blocks) +
                          " blocks (expected " +
                          std::to_string(kBaseResolution << num_res_blocks) + ")");
}

std::vector<int> GeneratorSpec::channel_schedule() const {
  std::vector<int> widths;
  widths.push_back(channel_multiplier << (num_res_blocks - 1));
  for (int i = 0; i < num_res_blocks; ++i)
    widths.push_back(channel_multiplier << (num_res_blocks - 1 - i));
  return widths;
}

GeneratorSpec GeneratorSpec::full_scale(int channel_multiplier, ConvKind kind, int num_classes) {
  GeneratorSpec s;
  s.z_dim = 128;
  s.num_classes = num_classes;
  s.embedding_dim = 128;
  s.channel_multiplier = channel_multiplier;
  s.num_res_blocks = 5;
  s.conv_kind = kind;
  s.output_resolution = 128;
  return s;
}

void DiscriminatorSpec::validate() const {
  if (channel_multiplier < 1) throw InvalidArgument("discriminator: channel_multiplier must be >= 1");
  if (num_strided_layers < 1) throw InvalidArgument("discriminator: num_strided_layers must be >= 1");
  if (num_classes < 1) throw InvalidArgument("discriminator: num_classes must be >= 1");
  if (spectral_norm_iters < 1)
    throw InvalidArgument("discriminator: spectral_norm_iters must be >= 1");
  if (input_resolution < (1 << num_strided_layers))
    throw InvalidArgument("discriminator: input_resolution too small for the strided stack");
}

// ---------------------------------------------------------------------------
// Generator

template <typename T>
Generator<T>::Generator(const GeneratorSpec& spec, std::uint64_t init_seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(derive_seed(init_seed, {0x6e6e}));
  const auto widths = spec_.channel_schedule();
  const int base = GeneratorSpec::kBaseResolution;
  embedding_ = nn::Embedding<T>(spec_.num_classes, spec_.embedding_dim, T(1), rng);
  input_ = nn::Linear<T>(spec_.z_dim, widths[0] * base * base, true, nn::Init::kXavierUniform, rng);
  int res = base;
  for (int i = 0; i < spec_.num_res_blocks; ++i) {
    const int in = widths[i], out = widths[i + 1];
    Block b;
    b.bn1 = nn::ConditionalBatchNorm2d<T>(in, spec_.embedding_dim, rng);
    b.conv1 = nn::SpatialConv<T>(spec_.conv_kind, in, out, 3, rng);
    b.bn2 = nn::ConditionalBatchNorm2d<T>(out, spec_.embedding_dim, rng);
    b.conv2 = nn::SpatialConv<T>(spec_.conv_kind, out, out, 3, rng);
    b.shortcut = nn::Conv2d<T>(in, out, 1, 1, 0, true, nn::Init::kXavierUniform, rng);
    b.in_res = res;
    blocks_.push_back(std::move(b));
    res *= 2;
  }
  out_bn_ = nn::BatchNorm2d<T>(widths.back(), true);
  out_conv_ = nn::SpatialConv<T>(spec_.conv_kind, widths.back(), 3, 3, rng);
}

template <typename T>
Tensor<T> Generator<T>::embed(std::span<const int> labels) const {
  const int d = spec_.embedding_dim;
  Tensor<T> e(static_cast<int>(labels.size()), d);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= spec_.num_classes)
      throw InvalidArgument("class index " + std::to_string(y) + " outside [0, " +
                            std::to_string(spec_.num_classes) + ")");
    std::copy_n(embedding_.weight.data() + static_cast<std::size_t>(y) * d, d,
                e.sample(static_cast<int>(i)));
  }
  return e;
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& z, std::span<const int> labels, Mode mode) {
  if (static_cast<int>(labels.size()) != z.n())
    throw InvalidArgument("generator: latent and label batch sizes differ");
  Tensor<T> e = embedding_.forward(labels);
  from_labels_ = true;
  return run(z, e, mode);
}

template <typename T>
Tensor<T> Generator<T>::forward_embedded(const Tensor<T>& z, const Tensor<T>& class_embedding,
                                         Mode mode) {
  if (class_embedding.n() != z.n() || class_embedding.c() != spec_.embedding_dim)
    throw InvalidArgument("generator: embedding batch has wrong shape");
  from_labels_ = false;
  return run(z, class_embedding, mode);
}

template <typename T>
Tensor<T> Generator<T>::run(const Tensor<T>& z, const Tensor<T>& e, Mode mode) {
  if (z.c() != spec_.z_dim)
    throw InvalidArgument("generator: expected z_dim " + std::to_string(spec_.z_dim) +
                          ", got " + z.shape_string());
  const int n = z.n();
  const int base = GeneratorSpec::kBaseResolution;
  Tensor<T> h = input_.forward(z);
  h = h.reshaped(n, spec_.channel_schedule()[0], base, base);
  for (auto& b : blocks_) {
    Tensor<T> a = b.bn1.forward(h, e, mode);
    b.act1 = nn::relu(a);
    a = b.conv1.forward(nn::upsample2x(b.act1));
    a = b.bn2.forward(a, e, mode);
    b.act2 = nn::relu(a);
    a = b.conv2.forward(b.act2);
    Tensor<T> s = b.shortcut.forward(nn::upsample2x(h));
    a += s;
    h = std::move(a);
  }
  out_act_ = nn::relu(out_bn_.forward(h, mode));
  out_image_ = nn::tanh(out_conv_.forward(out_act_));
  return out_image_;
}

template <typename T>
void Generator<T>::backward(const Tensor<T>& grad_images) {
  if (!grad_images.same_shape(out_image_))
    throw InvalidArgument("generator backward: gradient shape mismatch");
  const int n = grad_images.n();
  Tensor<T> g = nn::tanh_backward(out_image_, grad_images);
  g = out_conv_.backward(g);
  g = nn::relu_backward(out_act_, g);
  g = out_bn_.backward(g);
  Tensor<T> g_emb(n, spec_.embedding_dim);
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    auto& b = *it;
    Tensor<T> gs = nn::upsample2x_backward(b.shortcut.backward(g));
    Tensor<T> ga = b.conv2.backward(g);
    ga = nn::relu_backward(b.act2, ga);
    ga = b.bn2.backward(ga, g_emb);
    ga = nn::upsample2x_backward(b.conv1.backward(ga));
    ga = nn::relu_backward(b.act1, ga);
    ga = b.bn1.backward(ga, g_emb);
    ga += gs;
    g = std::move(ga);
  }
  const int c0 = spec_.channel_schedule()[0];
  const int base = GeneratorSpec::kBaseResolution;
  input_.backward(g.reshaped(n, c0 * base * base));
  if (from_labels_) embedding_.backward(g_emb);
}

template <typename T>
ParamList<T> Generator<T>::params() {
  ParamList<T> out;
  embedding_.params(out, "g.embedding");
  input_.params(out, "g.input");
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "g.block" + std::to_string(i);
    auto& b = blocks_[i];
    b.bn1.params(out, p + ".bn1");
    b.conv1.params(out, p + ".conv1");
    b.bn2.params(out, p + ".bn2");
    b.conv2.params(out, p + ".conv2");
    b.shortcut.params(out, p + ".shortcut");
  }
  out_bn_.params(out, "g.out_bn");
  out_conv_.params(out, "g.out_conv");
  return out;
}

template <typename T>
BufferList<T> Generator<T>::buffers() {
  BufferList<T> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const std::string p = "g.block" + std::to_string(i);
    blocks_[i].bn1.buffers(out, p + ".bn1");
    blocks_[i].bn2.buffers(out, p + ".bn2");
  }
  out_bn_.buffers(out, "g.out_bn");
  return out;
}

template <typename T>
std::int64_t Generator<T>::macs() const {
  std::int64_t total = input_.macs();
  for (const auto& b : blocks_) {
    const int r = 2 * b.in_res;
    total += b.conv1.macs(r, r) + b.conv2.macs(r, r) + b.shortcut.macs(r, r);
  }
  const int r = spec_.output_resolution;
  total += out_conv_.macs(r, r);
  return total;
}

// ---------------------------------------------------------------------------
// Discriminator

template <typename T>
Discriminator<T>::Discriminator(const DiscriminatorSpec& spec, std::uint64_t init_seed)
    : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(derive_seed(init_seed, {0xd15c}));
  int in = 3;
  for (int i = 0; i < spec_.num_strided_layers; ++i) {
    const int out = spec_.layer_width(i);
    nn::Conv2d<T> conv(in, out, 4, 2, 1, true, nn::Init::kXavierUniform, rng);
    conv.enable_spectral_norm(derive_seed(init_seed, {0x5a, std::uint64_t(i)}));
    convs_.push_back(std::move(conv));
    in = out;
  }
  const int f = spec_.feature_dim();
  head_ = nn::Linear<T>(f, 1, true, nn::Init::kXavierUniform, rng);
  head_.enable_spectral_norm(derive_seed(init_seed, {0x5b}));
  projection_ = nn::Embedding<T>(spec_.num_classes, f, T(0), rng);
  // Xavier-uniform rows for the projection table.
  {
    const double bound = std::sqrt(6.0 / (spec_.num_classes + f));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : projection_.weight.vec()) v = static_cast<T>(dist(rng));
  }
  projection_.enable_spectral_norm(derive_seed(init_seed, {0x5c}));
  refresh_spectral(spec_.spectral_norm_iters);
}

template <typename T>
void Discriminator<T>::refresh_spectral(int iters, double rel_tol) {
  for (auto& c : convs_) c.refresh_spectral(iters, rel_tol);
  head_.refresh_spectral(iters, rel_tol);
  projection_.refresh_spectral(iters, rel_tol);
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward(const Tensor<T>& x, std::span<const int> labels) {
  if (x.c() != 3 || x.h() != spec_.input_resolution || x.w() != spec_.input_resolution)
    throw InvalidArgument("discriminator: expected (N,3," + std::to_string(spec_.input_resolution) +
                          "," + std::to_string(spec_.input_resolution) + ") input, got " +
                          x.shape_string());
  if (static_cast<int>(labels.size()) != x.n())
    throw InvalidArgument("discriminator: image and label batch sizes differ");
  DiscriminatorOutput<T> out;
  pre_act_.clear();
  Tensor<T> h = x;
  for (auto& conv : convs_) {
    Tensor<T> pre = conv.forward(h);
    h = nn::leaky_relu(pre, T(kLeakySlope));
    pre_act_.push_back(std::move(pre));
    out.features.push_back(h);
  }
  last_h_ = h.h();
  last_w_ = h.w();
  phi_ = nn::sum_pool(h);
  Tensor<T> uncond = head_.forward(phi_);
  proj_rows_ = projection_.forward(labels);
  const int n = x.n(), f = phi_.c();
  out.scores.resize(n);
  for (int i = 0; i < n; ++i) {
    T dot = 0;
    for (int j = 0; j < f; ++j) dot += proj_rows_.at(i, j) * phi_.at(i, j);
    out.scores[i] = uncond[i] + dot;
  }
  return out;
}

template <typename T>
Tensor<T> Discriminator<T>::backward(std::span<const T> grad_scores,
                                     const FeatureStack<T>& grad_features) {
  const int n = phi_.n(), f = phi_.c();
  if (static_cast<int>(grad_scores.size()) != n)
    throw InvalidArgument("discriminator backward: score gradient has wrong length");
  if (!grad_features.empty() && grad_features.size() != convs_.size())
    throw InvalidArgument("discriminator backward: feature gradient stack has wrong length");
  Tensor<T> g_scores(n, 1);
  std::copy(grad_scores.begin(), grad_scores.end(), g_scores.data());
  Tensor<T> g_phi = head_.backward(g_scores);
  Tensor<T> g_rows(n, f);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < f; ++j) {
      g_phi.at(i, j) += grad_scores[i] * proj_rows_.at(i, j);
      g_rows.at(i, j) = grad_scores[i] * phi_.at(i, j);
    }
  projection_.backward(g_rows);
  Tensor<T> g = nn::sum_pool_backward(g_phi, last_h_, last_w_);
  for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
    if (!grad_features.empty() && !grad_features[i].empty()) g += grad_features[i];
    g = nn::leaky_relu_backward(pre_act_[i], g, T(kLeakySlope));
    g = convs_[i].backward(g);
  }
  return g;
}

template <typename T>
ParamList<T> Discriminator<T>::params() {
  ParamList<T> out;
  for (std::size_t i = 0; i < convs_.size(); ++i) convs_[i].params(out, "d.conv" + std::to_string(i));
  head_.params(out, "d.head");
  projection_.params(out, "d.projection");
  return out;
}

template <typename T>
BufferList<T> Discriminator<T>::buffers() {
  BufferList<T> out;
  for (std::size_t i = 0; i < convs_.size(); ++i)
    convs_[i].buffers(out, "d.conv" + std::to_string(i));
  head_.buffers(out, "d.head");
  projection_.buffers(out, "d.projection");
  return out;
}

template <typename T>
std::int64_t Discriminator<T>::macs() const {
  std::int64_t total = 0;
  int r = spec_.input_resolution;
  for (const auto& c : convs_) {
    total += c.macs(r, r);
    r = c.out_size(r);
  }
  return total + head_.macs() + spec_.feature_dim();
}

template <typename T>
std::vector<const nn::SpectralNorm<T>*> Discriminator<T>::spectral_layers() const {
  std::vector<const nn::SpectralNorm<T>*> out;
  for (const auto& c : convs_) out.push_back(c.spectral());
  out.push_back(head_.spectral());
  out.push_back(projection_.spectral());
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Discriminator<T>::raw_weights() const {
  std::vector<const Tensor<T>*> out;
  for (const auto& c : convs_) out.push_back(&c.weight);
  out.push_back(&head_.weight);
  out.push_back(&projection_.weight);
  return out;
}

template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace gandistill
