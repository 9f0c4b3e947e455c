#include "gandistill/layers.hpp"

#include <cmath>

#include <Eigen/Core>

namespace gandistill::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;
template <typename T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
void init_tensor(Tensor<T>& t, Init init, double fan_in, double fan_out, std::mt19937_64& rng) {
  switch (init) {
    case Init::kXavierUniform: {
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
      break;
    }
    case Init::kNormal002: {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
      break;
    }
    case Init::kZero:
      t.zero();
      break;
  }
}

template <typename T>
void normalize(VecT<T>& v) {
  const T norm = v.norm();
  v /= std::max(norm, T(1e-12));
}

}  // namespace

// ---------------------------------------------------------------------------
// SpectralNorm

template <typename T>
SpectralNorm<T>::SpectralNorm(int rows, int cols, std::uint64_t seed)
    : rows_(rows), cols_(cols), u_(1, rows), v_(1, cols) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& x : u_.vec()) x = static_cast<T>(dist(rng));
  Eigen::Map<VecT<T>> u(u_.data(), rows_);
  VecT<T> tmp = u;
  normalize(tmp);
  u = tmp;
}

template <typename T>
int SpectralNorm<T>::refresh(const Tensor<T>& w, int iters, double rel_tol) {
  if (iters < 1) throw InvalidArgument("spectral norm needs at least one power iteration");
  if (static_cast<std::size_t>(rows_) * cols_ != w.size())
    throw InvalidArgument("spectral norm: weight size does not match rows x cols");
  CMapR<T> W(w.data(), rows_, cols_);
  VecT<T> u = Eigen::Map<VecT<T>>(u_.data(), rows_);
  VecT<T> v(cols_), wv(rows_);
  double prev = 0;
  int it = 0;
  for (; it < kMaxPowerIterations; ++it) {
    v.noalias() = W.transpose() * u;
    normalize(v);
    wv.noalias() = W * v;
    u = wv;
    normalize(u);
    if (it + 1 < iters) continue;
    if (rel_tol <= 0) break;
    // u.W v after the update equals |W v|.
    const double s = static_cast<double>(wv.norm());
    if (it + 1 > iters && std::abs(s - prev) <= rel_tol * s) break;
    prev = s;
  }
  sigma_ = u.dot(W * v);
  if (!(std::abs(sigma_) > T(0))) sigma_ = T(1e-12);
  Eigen::Map<VecT<T>>(u_.data(), rows_) = u;
  Eigen::Map<VecT<T>>(v_.data(), cols_) = v;
  w_bar_ = w;
  for (auto& x : w_bar_.vec()) x /= sigma_;
  ready_ = true;
  return std::min(it + 1, kMaxPowerIterations);
}

template <typename T>
void SpectralNorm<T>::backward(const Tensor<T>& grad_normalized, Tensor<T>& grad_raw) const {
  CMapR<T> G(grad_normalized.data(), rows_, cols_);
  CMapR<T> Wb(w_bar_.data(), rows_, cols_);
  MapR<T> GW(grad_raw.data(), rows_, cols_);
  Eigen::Map<const VecT<T>> u(u_.data(), rows_);
  Eigen::Map<const VecT<T>> v(v_.data(), cols_);
  const T inner = G.cwiseProduct(Wb).sum();
  GW += (G - inner * u * v.transpose()) / sigma_;
}

template <typename T>
void SpectralNorm<T>::buffers(BufferList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".sn_u", &u_});
  out.push_back({prefix + ".sn_v", &v_});
}

// ---------------------------------------------------------------------------
// Linear

template <typename T>
Linear<T>::Linear(int in, int out, bool with_bias, Init init, std::mt19937_64& rng)
    : weight(out, in), grad_weight(out, in), in_(in), out_(out) {
  if (in < 1 || out < 1) throw InvalidArgument("linear layer needs positive dimensions");
  init_tensor(weight, init, in, out, rng);
  if (with_bias) {
    bias = Tensor<T>(1, out);
    grad_bias = Tensor<T>(1, out);
  }
}

template <typename T>
const Tensor<T>& Linear<T>::effective_weight() const {
  return sn_ ? sn_->normalized() : weight;
}

template <typename T>
void Linear<T>::enable_spectral_norm(std::uint64_t seed) {
  sn_.emplace(out_, in_, seed);
}

template <typename T>
void Linear<T>::refresh_spectral(int iters, double rel_tol) {
  if (sn_) sn_->refresh(weight, iters, rel_tol);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) {
  if (static_cast<int>(x.sample_size()) != in_)
    throw InvalidArgument("linear: expected " + std::to_string(in_) + " features, got " +
                          x.shape_string());
  if (sn_ && !sn_->ready()) sn_->refresh(weight, 1);
  input_ = x;
  const int n = x.n();
  Tensor<T> y(n, out_);
  CMapR<T> X(x.data(), n, in_);
  CMapR<T> W(effective_weight().data(), out_, in_);
  MapR<T> Y(y.data(), n, out_);
  Y.noalias() = X * W.transpose();
  if (!bias.empty()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), out_);
    Y.rowwise() += b;
  }
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& grad_out) {
  const int n = input_.n();
  CMapR<T> G(grad_out.data(), n, out_);
  CMapR<T> X(input_.data(), n, in_);
  if (sn_) {
    Tensor<T> gbar(out_, in_);
    MapR<T>(gbar.data(), out_, in_).noalias() = G.transpose() * X;
    sn_->backward(gbar, grad_weight);
  } else {
    MapR<T>(grad_weight.data(), out_, in_).noalias() += G.transpose() * X;
  }
  if (!bias.empty()) {
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(grad_bias.data(), out_) += G.colwise().sum();
  }
  Tensor<T> gx(input_.n(), input_.c(), input_.h(), input_.w());
  CMapR<T> W(effective_weight().data(), out_, in_);
  MapR<T>(gx.data(), n, in_).noalias() = G * W;
  return gx;
}

template <typename T>
void Linear<T>::params(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  if (!bias.empty()) out.push_back({prefix + ".bias", &bias, &grad_bias});
}

template <typename T>
void Linear<T>::buffers(BufferList<T>& out, const std::string& prefix) {
  if (sn_) sn_->buffers(out, prefix);
}

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in, int out, int kernel, int stride, int pad, bool with_bias, Init init,
                  std::mt19937_64& rng)
    : weight(out, in, kernel, kernel),
      grad_weight(out, in, kernel, kernel),
      in_(in),
      out_(out),
      k_(kernel),
      stride_(stride),
      pad_(pad) {
  if (in < 1 || out < 1 || kernel < 1 || stride < 1 || pad < 0)
    throw InvalidArgument("conv2d: invalid geometry");
  init_tensor(weight, init, double(in) * kernel * kernel, double(out) * kernel * kernel, rng);
  if (with_bias) {
    bias = Tensor<T>(1, out);
    grad_bias = Tensor<T>(1, out);
  }
}

template <typename T>
const Tensor<T>& Conv2d<T>::effective_weight() const {
  return sn_ ? sn_->normalized() : weight;
}

template <typename T>
void Conv2d<T>::enable_spectral_norm(std::uint64_t seed) {
  sn_.emplace(out_, in_ * k_ * k_, seed);
}

template <typename T>
void Conv2d<T>::refresh_spectral(int iters, double rel_tol) {
  if (sn_) sn_->refresh(weight, iters, rel_tol);
}

template <typename T>
std::int64_t Conv2d<T>::macs(int in_h, int in_w) const {
  return static_cast<std::int64_t>(out_size(in_h)) * out_size(in_w) * out_ * in_ * k_ * k_;
}

template <typename T>
void Conv2d<T>::im2col(const T* x, int h, int w, T* cols) const {
  const int oh = out_size(h), ow = out_size(w);
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < in_; ++c) {
    const T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k_; ++ki) {
      for (int kj = 0; kj < k_; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(c) * k_ + ki) * k_ + kj) * p;
        for (int r = 0; r < oh; ++r) {
          const int ih = r * stride_ - pad_ + ki;
          T* dst = row + static_cast<std::size_t>(r) * ow;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ih) * w;
          for (int q = 0; q < ow; ++q) {
            const int iw = q * stride_ - pad_ + kj;
            dst[q] = (iw >= 0 && iw < w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void Conv2d<T>::col2im(const T* cols, int h, int w, T* x) const {
  const int oh = out_size(h), ow = out_size(w);
  const std::size_t p = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < in_; ++c) {
    T* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k_; ++ki) {
      for (int kj = 0; kj < k_; ++kj) {
        const T* row = cols + ((static_cast<std::size_t>(c) * k_ + ki) * k_ + kj) * p;
        for (int r = 0; r < oh; ++r) {
          const int ih = r * stride_ - pad_ + ki;
          if (ih < 0 || ih >= h) continue;
          const T* src = row + static_cast<std::size_t>(r) * ow;
          T* dst = xc + static_cast<std::size_t>(ih) * w;
          for (int q = 0; q < ow; ++q) {
            const int iw = q * stride_ - pad_ + kj;
            if (iw >= 0 && iw < w) dst[iw] += src[q];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != in_)
    throw InvalidArgument("conv2d: expected " + std::to_string(in_) + " channels, got " +
                          x.shape_string());
  if (sn_ && !sn_->ready()) sn_->refresh(weight, 1);
  input_ = x;
  const int n = x.n(), h = x.h(), w = x.w();
  const int oh = out_size(h), ow = out_size(w);
  const int p = oh * ow;
  const int kk = in_ * k_ * k_;
  Tensor<T> y(n, out_, oh, ow);
  CMapR<T> W(effective_weight().data(), out_, kk);
  const bool pointwise = (k_ == 1 && stride_ == 1 && pad_ == 0);
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(kk) * p);
  for (int i = 0; i < n; ++i) {
    const T* src = x.sample(i);
    if (!pointwise) {
      im2col(src, h, w, cols.data());
      src = cols.data();
    }
    MapR<T> Y(y.sample(i), out_, p);
    Y.noalias() = W * CMapR<T>(src, kk, p);
    if (!bias.empty())
      for (int o = 0; o < out_; ++o) Y.row(o).array() += bias[o];
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out) {
  const int n = input_.n(), h = input_.h(), w = input_.w();
  const int oh = out_size(h), ow = out_size(w);
  const int p = oh * ow;
  const int kk = in_ * k_ * k_;
  const bool pointwise = (k_ == 1 && stride_ == 1 && pad_ == 0);
  Tensor<T> gx(n, in_, h, w);
  Tensor<T> gw(out_, in_, k_, k_);
  MapR<T> GW(gw.data(), out_, kk);
  CMapR<T> W(effective_weight().data(), out_, kk);
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(kk) * p);
  std::vector<T> gcols(pointwise ? 0 : static_cast<std::size_t>(kk) * p);
  for (int i = 0; i < n; ++i) {
    CMapR<T> G(grad_out.sample(i), out_, p);
    if (pointwise) {
      GW.noalias() += G * CMapR<T>(input_.sample(i), kk, p).transpose();
      MapR<T>(gx.sample(i), kk, p).noalias() = W.transpose() * G;
    } else {
      im2col(input_.sample(i), h, w, cols.data());
      GW.noalias() += G * CMapR<T>(cols.data(), kk, p).transpose();
      MapR<T>(gcols.data(), kk, p).noalias() = W.transpose() * G;
      col2im(gcols.data(), h, w, gx.sample(i));
    }
    if (!bias.empty())
      for (int o = 0; o < out_; ++o) grad_bias[o] += G.row(o).sum();
  }
  if (sn_)
    sn_->backward(gw, grad_weight);
  else
    grad_weight += gw;
  return gx;
}

template <typename T>
void Conv2d<T>::params(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  if (!bias.empty()) out.push_back({prefix + ".bias", &bias, &grad_bias});
}

template <typename T>
void Conv2d<T>::buffers(BufferList<T>& out, const std::string& prefix) {
  if (sn_) sn_->buffers(out, prefix);
}

// ---------------------------------------------------------------------------
// DepthwiseConv2d

template <typename T>
DepthwiseConv2d<T>::DepthwiseConv2d(int channels, int kernel, bool with_bias, Init init,
                                    std::mt19937_64& rng)
    : weight(channels, 1, kernel, kernel),
      grad_weight(channels, 1, kernel, kernel),
      channels_(channels),
      k_(kernel) {
  if (channels < 1 || kernel < 1 || kernel % 2 == 0)
    throw InvalidArgument("depthwise conv: invalid geometry");
  init_tensor(weight, init, kernel * kernel, kernel * kernel, rng);
  if (with_bias) {
    bias = Tensor<T>(1, channels);
    grad_bias = Tensor<T>(1, channels);
  }
}

template <typename T>
std::int64_t DepthwiseConv2d<T>::macs(int in_h, int in_w) const {
  return static_cast<std::int64_t>(in_h) * in_w * channels_ * k_ * k_;
}

template <typename T>
Tensor<T> DepthwiseConv2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != channels_) throw InvalidArgument("depthwise conv: channel mismatch");
  input_ = x;
  const int n = x.n(), h = x.h(), w = x.w(), pad = k_ / 2;
  Tensor<T> y(n, channels_, h, w);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < channels_; ++c) {
      const T* src = x.data() + (static_cast<std::size_t>(i) * channels_ + c) * h * w;
      T* dst = y.data() + (static_cast<std::size_t>(i) * channels_ + c) * h * w;
      const T* kw = weight.data() + static_cast<std::size_t>(c) * k_ * k_;
      const T b = bias.empty() ? T(0) : bias[c];
      std::fill(dst, dst + static_cast<std::size_t>(h) * w, b);
      // Row-wise axpy per kernel tap keeps the inner loop contiguous.
      for (int r = 0; r < h; ++r) {
        for (int ki = 0; ki < k_; ++ki) {
          const int ih = r + ki - pad;
          if (ih < 0 || ih >= h) continue;
          for (int kj = 0; kj < k_; ++kj) {
            const int shift = kj - pad;
            const int q0 = std::max(0, -shift), q1 = std::min(w, w - shift);
            const T kv = kw[ki * k_ + kj];
            const T* s = src + ih * w;
            T* d = dst + r * w;
            for (int q = q0; q < q1; ++q) d[q] += kv * s[q + shift];
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> DepthwiseConv2d<T>::backward(const Tensor<T>& grad_out) {
  const int n = input_.n(), h = input_.h(), w = input_.w(), pad = k_ / 2;
  Tensor<T> gx(n, channels_, h, w);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < channels_; ++c) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * h * w;
      const T* src = input_.data() + off;
      const T* g = grad_out.data() + off;
      T* gsrc = gx.data() + off;
      const T* kw = weight.data() + static_cast<std::size_t>(c) * k_ * k_;
      T* gkw = grad_weight.data() + static_cast<std::size_t>(c) * k_ * k_;
      T gb = 0;
      for (std::size_t e = 0; e < static_cast<std::size_t>(h) * w; ++e) gb += g[e];
      for (int r = 0; r < h; ++r) {
        for (int ki = 0; ki < k_; ++ki) {
          const int ih = r + ki - pad;
          if (ih < 0 || ih >= h) continue;
          for (int kj = 0; kj < k_; ++kj) {
            const int shift = kj - pad;
            const int q0 = std::max(0, -shift), q1 = std::min(w, w - shift);
            const T kv = kw[ki * k_ + kj];
            const T* s = src + ih * w;
            T* gs = gsrc + ih * w;
            const T* go = g + r * w;
            T acc = 0;
            for (int q = q0; q < q1; ++q) {
              acc += go[q] * s[q + shift];
              gs[q + shift] += go[q] * kv;
            }
            gkw[ki * k_ + kj] += acc;
          }
        }
      }
      if (!bias.empty()) grad_bias[c] += gb;
    }
  }
  return gx;
}

template <typename T>
void DepthwiseConv2d<T>::params(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
  if (!bias.empty()) out.push_back({prefix + ".bias", &bias, &grad_bias});
}

// ---------------------------------------------------------------------------
// SpatialConv

template <typename T>
SpatialConv<T>::SpatialConv(ConvKind kind, int in, int out, int kernel, std::mt19937_64& rng)
    : kind_(kind) {
  if (kind == ConvKind::kStandard) {
    dense_ = Conv2d<T>(in, out, kernel, 1, kernel / 2, true, Init::kXavierUniform, rng);
  } else {
    depthwise_ = DepthwiseConv2d<T>(in, kernel, true, Init::kXavierUniform, rng);
    pointwise_ = Conv2d<T>(in, out, 1, 1, 0, true, Init::kXavierUniform, rng);
  }
}

template <typename T>
Tensor<T> SpatialConv<T>::forward(const Tensor<T>& x) {
  if (kind_ == ConvKind::kStandard) return dense_.forward(x);
  return pointwise_.forward(depthwise_.forward(x));
}

template <typename T>
Tensor<T> SpatialConv<T>::backward(const Tensor<T>& grad_out) {
  if (kind_ == ConvKind::kStandard) return dense_.backward(grad_out);
  return depthwise_.backward(pointwise_.backward(grad_out));
}

template <typename T>
void SpatialConv<T>::params(ParamList<T>& out, const std::string& prefix) {
  if (kind_ == ConvKind::kStandard) {
    dense_.params(out, prefix);
  } else {
    depthwise_.params(out, prefix + ".depthwise");
    pointwise_.params(out, prefix + ".pointwise");
  }
}

template <typename T>
std::int64_t SpatialConv<T>::macs(int in_h, int in_w) const {
  if (kind_ == ConvKind::kStandard) return dense_.macs(in_h, in_w);
  return depthwise_.macs(in_h, in_w) + pointwise_.macs(in_h, in_w);
}

// ---------------------------------------------------------------------------
// Embedding

template <typename T>
Embedding<T>::Embedding(int num, int dim, T init_std, std::mt19937_64& rng)
    : weight(num, dim), grad_weight(num, dim) {
  if (num < 1 || dim < 1) throw InvalidArgument("embedding needs positive dimensions");
  std::normal_distribution<double> dist(0.0, static_cast<double>(init_std));
  for (auto& v : weight.vec()) v = static_cast<T>(dist(rng));
}

template <typename T>
const Tensor<T>& Embedding<T>::effective_weight() const {
  return sn_ ? sn_->normalized() : weight;
}

template <typename T>
void Embedding<T>::enable_spectral_norm(std::uint64_t seed) {
  sn_.emplace(weight.n(), weight.c(), seed);
}

template <typename T>
void Embedding<T>::refresh_spectral(int iters, double rel_tol) {
  if (sn_) sn_->refresh(weight, iters, rel_tol);
}

template <typename T>
Tensor<T> Embedding<T>::forward(std::span<const int> labels) {
  if (sn_ && !sn_->ready()) sn_->refresh(weight, 1);
  const int d = dim();
  const auto& w = effective_weight();
  Tensor<T> out(static_cast<int>(labels.size()), d);
  labels_.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num())
      throw InvalidArgument("class index " + std::to_string(y) + " outside [0, " +
                            std::to_string(num()) + ")");
    std::copy_n(w.data() + static_cast<std::size_t>(y) * d, d, out.sample(static_cast<int>(i)));
  }
  return out;
}

template <typename T>
void Embedding<T>::backward(const Tensor<T>& grad_out) {
  const int d = dim();
  Tensor<T> gbar;
  Tensor<T>* target = &grad_weight;
  if (sn_) {
    gbar = Tensor<T>(num(), d);
    target = &gbar;
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const T* g = grad_out.sample(static_cast<int>(i));
    T* dst = target->data() + static_cast<std::size_t>(labels_[i]) * d;
    for (int j = 0; j < d; ++j) dst[j] += g[j];
  }
  if (sn_) sn_->backward(gbar, grad_weight);
}

template <typename T>
void Embedding<T>::params(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight, &grad_weight});
}

template <typename T>
void Embedding<T>::buffers(BufferList<T>& out, const std::string& prefix) {
  if (sn_) sn_->buffers(out, prefix);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, bool affine, T momentum, T eps)
    : running_mean(1, channels, 1, 1, T(0)),
      running_var(1, channels, 1, 1, T(1)),
      channels_(channels),
      affine_(affine),
      momentum_(momentum),
      eps_(eps) {
  if (affine) {
    gamma = Tensor<T>(1, channels, 1, 1, T(1));
    beta = Tensor<T>(1, channels);
    grad_gamma = Tensor<T>(1, channels);
    grad_beta = Tensor<T>(1, channels);
  }
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.c() != channels_) throw InvalidArgument("batchnorm: channel mismatch");
  last_mode_ = mode;
  const int n = x.n();
  const std::size_t plane = x.plane();
  const double m = static_cast<double>(n) * plane;
  xhat_ = Tensor<T>(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(channels_, T(0));
  for (int c = 0; c < channels_; ++c) {
    T mean, var;
    if (mode == Mode::kTrain) {
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.data() + (static_cast<std::size_t>(i) * channels_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) s += p[j];
      }
      const double mu = s / m;
      double ss = 0;
      for (int i = 0; i < n; ++i) {
        const T* p = x.data() + (static_cast<std::size_t>(i) * channels_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) ss += (p[j] - mu) * (p[j] - mu);
      }
      mean = static_cast<T>(mu);
      var = static_cast<T>(ss / m);
      const T unbiased = m > 1 ? static_cast<T>(ss / (m - 1)) : var;
      running_mean[c] = (T(1) - momentum_) * running_mean[c] + momentum_ * mean;
      running_var[c] = (T(1) - momentum_) * running_var[c] + momentum_ * unbiased;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    const T inv = T(1) / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * plane;
      const T* p = x.data() + off;
      T* q = xhat_.data() + off;
      for (std::size_t j = 0; j < plane; ++j) q[j] = (p[j] - mean) * inv;
    }
  }
  if (!affine_) return xhat_;
  Tensor<T> y = xhat_;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < channels_; ++c) {
      T* q = y.data() + (static_cast<std::size_t>(i) * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) q[j] = gamma[c] * q[j] + beta[c];
    }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& grad_out) {
  const int n = xhat_.n();
  const std::size_t plane = xhat_.plane();
  const T m = static_cast<T>(static_cast<double>(n) * plane);
  Tensor<T> gx(xhat_.n(), xhat_.c(), xhat_.h(), xhat_.w());
  for (int c = 0; c < channels_; ++c) {
    const T g_scale = affine_ ? gamma[c] : T(1);
    T sum_g = 0, sum_gx = 0, sum_go = 0, sum_go_x = 0;
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const T go = grad_out[off + j];
        const T xh = xhat_[off + j];
        sum_go += go;
        sum_go_x += go * xh;
        sum_g += go * g_scale;
        sum_gx += go * g_scale * xh;
      }
    }
    if (affine_) {
      grad_gamma[c] += sum_go_x;
      grad_beta[c] += sum_go;
    }
    const T inv = inv_std_[c];
    for (int i = 0; i < n; ++i) {
      const std::size_t off = (static_cast<std::size_t>(i) * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const T gxh = grad_out[off + j] * g_scale;
        if (last_mode_ == Mode::kTrain)
          gx[off + j] = inv / m * (m * gxh - sum_g - xhat_[off + j] * sum_gx);
        else
          gx[off + j] = gxh * inv;
      }
    }
  }
  return gx;
}

template <typename T>
void BatchNorm2d<T>::params(ParamList<T>& out, const std::string& prefix) {
  if (!affine_) return;
  out.push_back({prefix + ".gamma", &gamma, &grad_gamma});
  out.push_back({prefix + ".beta", &beta, &grad_beta});
}

template <typename T>
void BatchNorm2d<T>::buffers(BufferList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
}

// ---------------------------------------------------------------------------
// ConditionalBatchNorm2d

template <typename T>
ConditionalBatchNorm2d<T>::ConditionalBatchNorm2d(int channels, int embedding_dim,
                                                  std::mt19937_64& rng)
    : bn_(channels, false),
      gain_(embedding_dim, channels, true, Init::kNormal002, rng),
      bias_(embedding_dim, channels, true, Init::kNormal002, rng) {}

template <typename T>
Tensor<T> ConditionalBatchNorm2d<T>::forward(const Tensor<T>& x, const Tensor<T>& embedding,
                                             Mode mode) {
  if (embedding.n() != x.n()) throw InvalidArgument("conditional batchnorm: batch mismatch");
  Tensor<T> y = bn_.forward(x, mode);
  gains_ = gain_.forward(embedding);
  biases_ = bias_.forward(embedding);
  const int n = x.n(), ch = x.c();
  const std::size_t plane = x.plane();
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < ch; ++c) {
      const T g = T(1) + gains_.at(i, c);
      const T b = biases_.at(i, c);
      T* q = y.data() + (static_cast<std::size_t>(i) * ch + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) q[j] = g * q[j] + b;
    }
  return y;
}

template <typename T>
Tensor<T> ConditionalBatchNorm2d<T>::backward(const Tensor<T>& grad_out,
                                              Tensor<T>& grad_embedding) {
  const Tensor<T>& xhat = bn_.normalized();
  const int n = xhat.n(), ch = xhat.c();
  const std::size_t plane = xhat.plane();
  Tensor<T> g_gain(n, ch), g_bias(n, ch);
  Tensor<T> g_xhat(n, ch, xhat.h(), xhat.w());
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < ch; ++c) {
      const std::size_t off = (static_cast<std::size_t>(i) * ch + c) * plane;
      const T g = T(1) + gains_.at(i, c);
      T sg = 0, sgx = 0;
      for (std::size_t j = 0; j < plane; ++j) {
        const T go = grad_out[off + j];
        sg += go;
        sgx += go * xhat[off + j];
        g_xhat[off + j] = go * g;
      }
      g_gain.at(i, c) = sgx;
      g_bias.at(i, c) = sg;
    }
  grad_embedding += gain_.backward(g_gain);
  grad_embedding += bias_.backward(g_bias);
  return bn_.backward(g_xhat);
}

template <typename T>
void ConditionalBatchNorm2d<T>::params(ParamList<T>& out, const std::string& prefix) {
  gain_.params(out, prefix + ".gain");
  bias_.params(out, prefix + ".bias");
}

template <typename T>
void ConditionalBatchNorm2d<T>::buffers(BufferList<T>& out, const std::string& prefix) {
  bn_.buffers(out, prefix);
}

// ---------------------------------------------------------------------------
// Activations and reshaping ops

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.vec()) v = v < T(0) ? T(0) : v;  // NaN passes through
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(y[i] > T(0))) g[i] = T(0);
  return g;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  Tensor<T> y = x;
  for (auto& v : y.vec()) v = v > T(0) ? v : slope * v;
  return y;
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out, T slope) {
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x[i] > T(0))) g[i] *= slope;
  return g;
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.vec()) v = std::tanh(v);
  return y;
}

template <typename T>
Tensor<T> tanh_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  Tensor<T> g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= T(1) - y[i] * y[i];
  return g;
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  const int h = x.h(), w = x.w();
  Tensor<T> y(x.n(), x.c(), 2 * h, 2 * w);
  const std::size_t planes = static_cast<std::size_t>(x.n()) * x.c();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.data() + p * h * w;
    T* dst = y.data() + p * 4 * h * w;
    for (int r = 0; r < h; ++r) {
      T* row0 = dst + static_cast<std::size_t>(2 * r) * 2 * w;
      T* row1 = row0 + 2 * w;
      for (int q = 0; q < w; ++q) {
        const T v = src[r * w + q];
        row0[2 * q] = row0[2 * q + 1] = row1[2 * q] = row1[2 * q + 1] = v;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& grad_out) {
  const int h = grad_out.h() / 2, w = grad_out.w() / 2;
  Tensor<T> g(grad_out.n(), grad_out.c(), h, w);
  const std::size_t planes = static_cast<std::size_t>(g.n()) * g.c();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = grad_out.data() + p * 4 * h * w;
    T* dst = g.data() + p * h * w;
    for (int r = 0; r < h; ++r) {
      const T* row0 = src + static_cast<std::size_t>(2 * r) * 2 * w;
      const T* row1 = row0 + 2 * w;
      for (int q = 0; q < w; ++q)
        dst[r * w + q] = row0[2 * q] + row0[2 * q + 1] + row1[2 * q] + row1[2 * q + 1];
    }
  }
  return g;
}

template <typename T>
Tensor<T> sum_pool(const Tensor<T>& x) {
  Tensor<T> y(x.n(), x.c());
  const std::size_t plane = x.plane();
  for (std::size_t p = 0; p < y.size(); ++p) {
    const T* src = x.data() + p * plane;
    T s = 0;
    for (std::size_t j = 0; j < plane; ++j) s += src[j];
    y[p] = s;
  }
  return y;
}

template <typename T>
Tensor<T> sum_pool_backward(const Tensor<T>& grad_out, int h, int w) {
  Tensor<T> g(grad_out.n(), grad_out.c(), h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < grad_out.size(); ++p)
    std::fill_n(g.data() + p * plane, plane, grad_out[p]);
  return g;
}

#define GANDISTILL_INSTANTIATE(T)                                                   \
  template class SpectralNorm<T>;                                                   \
  template class Linear<T>;                                                         \
  template class Conv2d<T>;                                                         \
  template class DepthwiseConv2d<T>;                                                \
  template class SpatialConv<T>;                                                    \
  template class Embedding<T>;                                                      \
  template class BatchNorm2d<T>;                                                    \
  template class ConditionalBatchNorm2d<T>;                                         \
  template Tensor<T> relu(const Tensor<T>&);                                        \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                               \
  template Tensor<T> leaky_relu_backward(const Tensor<T>&, const Tensor<T>&, T);    \
  template Tensor<T> tanh(const Tensor<T>&);                                        \
  template Tensor<T> tanh_backward(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> upsample2x(const Tensor<T>&);                                  \
  template Tensor<T> upsample2x_backward(const Tensor<T>&);                         \
  template Tensor<T> sum_pool(const Tensor<T>&);                                    \
  template Tensor<T> sum_pool_backward(const Tensor<T>&, int, int);

GANDISTILL_INSTANTIATE(float)
GANDISTILL_INSTANTIATE(double)

#undef GANDISTILL_INSTANTIATE

}  // namespace gandistill::nn
