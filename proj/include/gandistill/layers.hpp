#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "gandistill/tensor.hpp"

namespace gandistill::nn {

enum class Mode { kTrain, kEval };

enum class Init { kXavierUniform, kNormal002, kZero };

/// Power-iteration spectral normalization of a weight viewed as rows x cols,
/// rows being the output dimension. Keeps one persistent (u, v) pair.
template <typename T>
class SpectralNorm {
 public:
  SpectralNorm() = default;
  SpectralNorm(int rows, int cols, std::uint64_t seed);

  static constexpr int kMaxPowerIterations = 100000;

  /// Runs `iters` power iterations against `w` and caches w / sigma. With
  /// rel_tol > 0 it keeps iterating until the estimate of sigma changes by
  /// less than rel_tol per iteration. Returns the iteration count.
  int refresh(const Tensor<T>& w, int iters, double rel_tol = 0);
  const Tensor<T>& normalized() const { return w_bar_; }
  T sigma() const { return sigma_; }
  bool ready() const { return ready_; }

  /// grad_raw += (G - <G, W_bar> u v^T) / sigma, treating u and v as constants.
  void backward(const Tensor<T>& grad_normalized, Tensor<T>& grad_raw) const;

  void buffers(BufferList<T>& out, const std::string& prefix);

 private:
  int rows_ = 0;
  int cols_ = 0;
  Tensor<T> u_;
  Tensor<T> v_;
  Tensor<T> w_bar_;
  T sigma_ = T(1);
  bool ready_ = false;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, bool bias, Init init, std::mt19937_64& rng);

  /// (N, in) -> (N, out)
  Tensor<T> forward(const Tensor<T>& x);
  /// Accumulates parameter gradients; returns the input gradient.
  Tensor<T> backward(const Tensor<T>& grad_out);

  void enable_spectral_norm(std::uint64_t seed);
  void refresh_spectral(int iters, double rel_tol = 0);
  const SpectralNorm<T>* spectral() const { return sn_ ? &*sn_ : nullptr; }
  const Tensor<T>& effective_weight() const;

  void params(ParamList<T>& out, const std::string& prefix);
  void buffers(BufferList<T>& out, const std::string& prefix);
  std::int64_t macs() const { return static_cast<std::int64_t>(in_) * out_; }
  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Tensor<T> weight;  // (out, in)
  Tensor<T> bias;    // (1, out), empty when disabled
  Tensor<T> grad_weight;
  Tensor<T> grad_bias;

 private:
  int in_ = 0;
  int out_ = 0;
  Tensor<T> input_;
  std::optional<SpectralNorm<T>> sn_;
};

/// Dense 2-D convolution (square kernel, symmetric zero padding).
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int pad, bool bias, Init init,
         std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);

  void enable_spectral_norm(std::uint64_t seed);
  void refresh_spectral(int iters, double rel_tol = 0);
  const SpectralNorm<T>* spectral() const { return sn_ ? &*sn_ : nullptr; }
  const Tensor<T>& effective_weight() const;

  void params(ParamList<T>& out, const std::string& prefix);
  void buffers(BufferList<T>& out, const std::string& prefix);

  int out_size(int in_size) const { return (in_size + 2 * pad_ - k_) / stride_ + 1; }
  std::int64_t macs(int in_h, int in_w) const;
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Tensor<T> weight;  // (out, in, k, k)
  Tensor<T> bias;    // (1, out)
  Tensor<T> grad_weight;
  Tensor<T> grad_bias;

 private:
  void im2col(const T* x, int h, int w, T* cols) const;
  void col2im(const T* cols, int h, int w, T* x) const;

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Tensor<T> input_;
  std::optional<SpectralNorm<T>> sn_;
};

/// Per-channel k x k convolution, stride 1, "same" padding.
template <typename T>
class DepthwiseConv2d {
 public:
  DepthwiseConv2d() = default;
  DepthwiseConv2d(int channels, int kernel, bool bias, Init init, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void params(ParamList<T>& out, const std::string& prefix);
  std::int64_t macs(int in_h, int in_w) const;

  Tensor<T> weight;  // (channels, 1, k, k)
  Tensor<T> bias;
  Tensor<T> grad_weight;
  Tensor<T> grad_bias;

 private:
  int channels_ = 0, k_ = 3;
  Tensor<T> input_;
};

enum class ConvKind { kStandard, kDepthwiseSeparable };

/// A k x k "same" convolution that is either dense or factorized into
/// depthwise + pointwise parts.
template <typename T>
class SpatialConv {
 public:
  SpatialConv() = default;
  SpatialConv(ConvKind kind, int in, int out, int kernel, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void params(ParamList<T>& out, const std::string& prefix);
  std::int64_t macs(int in_h, int in_w) const;
  ConvKind kind() const { return kind_; }

 private:
  ConvKind kind_ = ConvKind::kStandard;
  Conv2d<T> dense_;
  DepthwiseConv2d<T> depthwise_;
  Conv2d<T> pointwise_;
};

/// Lookup table (num_classes, dim).
template <typename T>
class Embedding {
 public:
  Embedding() = default;
  Embedding(int num, int dim, T init_std, std::mt19937_64& rng);

  Tensor<T> forward(std::span<const int> labels);
  void backward(const Tensor<T>& grad_out);

  void enable_spectral_norm(std::uint64_t seed);
  void refresh_spectral(int iters, double rel_tol = 0);
  const SpectralNorm<T>* spectral() const { return sn_ ? &*sn_ : nullptr; }
  const Tensor<T>& effective_weight() const;

  void params(ParamList<T>& out, const std::string& prefix);
  void buffers(BufferList<T>& out, const std::string& prefix);
  int num() const { return weight.n(); }
  int dim() const { return weight.c(); }

  Tensor<T> weight;
  Tensor<T> grad_weight;

 private:
  std::vector<int> labels_;
  std::optional<SpectralNorm<T>> sn_;
};

/// Per-channel batch normalization with optional learned affine transform.
/// Train mode normalizes with batch statistics and updates running averages.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(int channels, bool affine, T momentum = T(0.1), T eps = T(1e-5));

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);

  /// Normalized activations of the last forward (before any affine map).
  const Tensor<T>& normalized() const { return xhat_; }

  void params(ParamList<T>& out, const std::string& prefix);
  void buffers(BufferList<T>& out, const std::string& prefix);
  int channels() const { return channels_; }

  Tensor<T> gamma, beta, grad_gamma, grad_beta;
  Tensor<T> running_mean, running_var;

 private:
  int channels_ = 0;
  bool affine_ = false;
  T momentum_ = T(0.1), eps_ = T(1e-5);
  Mode last_mode_ = Mode::kTrain;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

/// Batch normalization whose per-sample gains and biases are linear maps of a
/// class embedding: gain = 1 + W_g e, bias = W_b e.
template <typename T>
class ConditionalBatchNorm2d {
 public:
  ConditionalBatchNorm2d() = default;
  ConditionalBatchNorm2d(int channels, int embedding_dim, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& embedding, Mode mode);
  /// Returns the input gradient and accumulates into grad_embedding (N, E).
  Tensor<T> backward(const Tensor<T>& grad_out, Tensor<T>& grad_embedding);

  void params(ParamList<T>& out, const std::string& prefix);
  void buffers(BufferList<T>& out, const std::string& prefix);

  BatchNorm2d<T>& norm() { return bn_; }
  Linear<T>& gain_map() { return gain_; }
  Linear<T>& bias_map() { return bias_; }

 private:
  BatchNorm2d<T> bn_;
  Linear<T> gain_;
  Linear<T> bias_;
  Tensor<T> gains_, biases_;
};

// Stateless activations. Backward functions take whichever forward tensor
// determines the local derivative.

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out, T slope);

template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& grad_out);

/// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& grad_out);

/// Sum over spatial positions: (N, C, H, W) -> (N, C).
template <typename T>
Tensor<T> sum_pool(const Tensor<T>& x);
template <typename T>
Tensor<T> sum_pool_backward(const Tensor<T>& grad_out, int h, int w);

}  // namespace gandistill::nn
