#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "gandistill/errors.hpp"

namespace gandistill {

// Vectorized Eigen reductions peel unaligned leading elements, so the
// summation order (and the last bits of the result) would otherwise depend on
// where malloc placed a buffer. Cache-line alignment keeps runs reproducible.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t{kAlign}));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t{kAlign}); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense NCHW tensor. Rank-2 data (batch x features) uses h = w = 1.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h = 1, int w = 1, T fill = T(0))
      : shape_{n, c, h, w}, data_(static_cast<std::size_t>(n) * c * h * w, fill) {}

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }

  std::size_t size() const { return data_.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(shape_[2]) * shape_[3]; }
  std::size_t sample_size() const { return static_cast<std::size_t>(shape_[1]) * plane(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  AlignedVector<T>& vec() { return data_; }
  const AlignedVector<T>& vec() const { return data_; }

  T* sample(int i) { return data_.data() + i * sample_size(); }
  const T* sample(int i) const { return data_.data() + i * sample_size(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int h = 0, int w = 0) {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(int n, int c, int h = 0, int w = 0) const {
    return data_[((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  void resize(int n, int c, int h = 1, int w = 1) {
    shape_ = {n, c, h, w};
    data_.assign(static_cast<std::size_t>(n) * c * h * w, T(0));
  }

  /// Reinterprets the shape; the element count must not change.
  Tensor reshaped(int n, int c, int h = 1, int w = 1) const {
    if (static_cast<std::size_t>(n) * c * h * w != data_.size())
      throw InvalidArgument("reshape changes element count");
    Tensor out = *this;
    out.shape_ = {n, c, h, w};
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n(), c(), h(), w());
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  Tensor& operator+=(const Tensor& o) {
    require_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  void add_scaled(const Tensor& o, T scale) {
    require_same(o, "add_scaled");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * o.data_[i];
  }

  std::string shape_string() const {
    return "(" + std::to_string(shape_[0]) + "," + std::to_string(shape_[1]) + "," +
           std::to_string(shape_[2]) + "," + std::to_string(shape_[3]) + ")";
  }

 private:
  void require_same(const Tensor& o, const char* op) const {
    if (!same_shape(o))
      throw InvalidArgument(std::string("shape mismatch in ") + op + ": " + shape_string() +
                            " vs " + o.shape_string());
  }

  std::array<int, 4> shape_{0, 0, 1, 1};
  AlignedVector<T> data_;
};

/// A trainable tensor and its gradient accumulator, addressed by a stable name.
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;
};

/// Non-trainable persistent state (running statistics, power-iteration vectors).
template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* value;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;
template <typename T>
using BufferList = std::vector<BufferRef<T>>;

template <typename T>
std::int64_t count_elements(const ParamList<T>& params) {
  std::int64_t total = 0;
  for (const auto& p : params) total += static_cast<std::int64_t>(p.value->size());
  return total;
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (const auto& p : params) p.grad->zero();
}

}  // namespace gandistill
