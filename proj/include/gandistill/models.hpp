#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gandistill/layers.hpp"
#include "gandistill/tensor.hpp"

namespace gandistill {

using nn::ConvKind;
using nn::Mode;

std::string to_string(ConvKind kind);
ConvKind conv_kind_from_string(const std::string& s);

/// Architecture hyperparameters of the student generator.
struct GeneratorSpec {
  static constexpr int kBaseResolution = 4;

  int z_dim = 128;
  int num_classes = 10;
  int embedding_dim = 128;
  int channel_multiplier = 8;  // "Ch."
  int num_res_blocks = 3;
  ConvKind conv_kind = ConvKind::kDepthwiseSeparable;
  int output_resolution = 32;

  /// Throws InvalidArgument unless output_resolution == 4 * 2^num_res_blocks etc.
  void validate() const;

  /// Feature-map widths: entry 0 feeds the first block, entry i+1 leaves block i.
  /// Multipliers halve per block and end at 1 (16,16,8,4,2,1 for five blocks).
  std::vector<int> channel_schedule() const;

  /// Spec with the resolution and block count used for 128x128 ImageNet models.
  static GeneratorSpec full_scale(int channel_multiplier, ConvKind kind, int num_classes = 1000);

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

struct DiscriminatorSpec {
  int channel_multiplier = 16;
  int num_strided_layers = 3;
  int num_classes = 10;
  int spectral_norm_iters = 1;
  int input_resolution = 32;

  void validate() const;
  /// Output width of strided layer i.
  int layer_width(int i) const { return channel_multiplier << i; }
  int feature_dim() const { return layer_width(num_strided_layers - 1); }

  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

/// Per-layer discriminator activations, one entry per convolutional layer.
template <typename T>
using FeatureStack = std::vector<Tensor<T>>;

/// ResNet generator: z enters the first linear layer only, and the class enters
/// only through conditional batch norm gains/biases computed from one shared
/// embedding table.
template <typename T>
class Generator {
 public:
  Generator(const GeneratorSpec& spec, std::uint64_t init_seed);

  const GeneratorSpec& spec() const { return spec_; }

  /// z: (N, z_dim); returns (N, 3, R, R) images in [-1, 1].
  Tensor<T> forward(const Tensor<T>& z, std::span<const int> labels, Mode mode);
  /// Same network but with explicit class-embedding rows (N, embedding_dim).
  Tensor<T> forward_embedded(const Tensor<T>& z, const Tensor<T>& class_embedding, Mode mode);

  /// Rows of the shared class embedding.
  Tensor<T> embed(std::span<const int> labels) const;

  /// Accumulates parameter gradients for the last forward pass.
  void backward(const Tensor<T>& grad_images);

  ParamList<T> params();
  BufferList<T> buffers();
  std::int64_t macs() const;

  nn::Embedding<T>& embedding() { return embedding_; }

 private:
  struct Block {
    nn::ConditionalBatchNorm2d<T> bn1, bn2;
    nn::SpatialConv<T> conv1, conv2;
    nn::Conv2d<T> shortcut;
    Tensor<T> act1, act2;
    int in_res = 0;
  };

  Tensor<T> run(const Tensor<T>& z, const Tensor<T>& e, Mode mode);

  GeneratorSpec spec_;
  nn::Embedding<T> embedding_;
  nn::Linear<T> input_;
  std::vector<Block> blocks_;
  nn::BatchNorm2d<T> out_bn_;
  nn::SpatialConv<T> out_conv_;
  Tensor<T> out_act_, out_image_;
  std::vector<int> labels_;
  bool from_labels_ = true;
};

/// Result of a discriminator pass: one projection score per sample plus
/// the per-layer feature taps.
template <typename T>
struct DiscriminatorOutput {
  std::vector<T> scores;
  FeatureStack<T> features;
};

/// Strided-convolution projection discriminator; every weight-bearing layer is
/// spectrally normalized.
/// score(x, y) = head(phi(x)) + <embed(y), phi(x)>, phi = spatial sum of the last tap.
template <typename T>
class Discriminator {
 public:
  static constexpr double kLeakySlope = 0.2;

  Discriminator(const DiscriminatorSpec& spec, std::uint64_t init_seed);

  const DiscriminatorSpec& spec() const { return spec_; }

  /// Power-iterates every normalized layer and caches the normalized weights.
  /// rel_tol > 0 continues past `iters` until each sigma estimate settles.
  void refresh_spectral(int iters, double rel_tol = 0);
  void refresh_spectral() { refresh_spectral(spec_.spectral_norm_iters); }

  DiscriminatorOutput<T> forward(const Tensor<T>& x, std::span<const int> labels);

  /// grad_scores has one entry per sample; grad_features may be empty or hold
  /// empty tensors for taps without a gradient. Returns the input gradient.
  Tensor<T> backward(std::span<const T> grad_scores, const FeatureStack<T>& grad_features);

  ParamList<T> params();
  BufferList<T> buffers();
  std::int64_t macs() const;

  /// Every spectrally normalized layer, in forward order (convs, head, projection).
  std::vector<const nn::SpectralNorm<T>*> spectral_layers() const;
  std::vector<const Tensor<T>*> raw_weights() const;

  nn::Embedding<T>& projection() { return projection_; }
  nn::Linear<T>& head() { return head_; }

 private:
  DiscriminatorSpec spec_;
  std::vector<nn::Conv2d<T>> convs_;
  nn::Linear<T> head_;
  nn::Embedding<T> projection_;
  std::vector<Tensor<T>> pre_act_;
  Tensor<T> phi_, proj_rows_;
  int last_h_ = 0, last_w_ = 0;
};

template <typename Model>
std::int64_t count_params(Model& model) {
  return count_elements(model.params());
}

/// Multiply-accumulates x 2 over every convolution and linear layer.
template <typename Model>
std::int64_t count_flops(const Model& model) {
  return 2 * model.macs();
}

/// Parameter count of a single k x k convolution with `in`/`out` channels (no bias).
std::int64_t conv_weight_count(ConvKind kind, int in, int out, int kernel);

}  // namespace gandistill
