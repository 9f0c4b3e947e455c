#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gandistill/tensor.hpp"

namespace gandistill {

/// Noise input shared by teacher and student. Every coordinate lies in
/// [-truncation, truncation].
struct LatentVector {
  std::vector<float> values;
  double truncation = 2.0;

  int dim() const { return static_cast<int>(values.size()); }
};

struct ClassLabel {
  int index = 0;

  friend bool operator==(ClassLabel, ClassLabel) = default;
};

struct LatentSample {
  LatentVector z;
  ClassLabel y;
};

inline constexpr double kDefaultTruncation = 2.0;

/// Standard-normal coordinates, re-drawing any value outside +-truncation.
LatentVector sample_truncated_normal(std::uint64_t seed, int z_dim, double truncation);
LatentVector sample_truncated_normal(std::mt19937_64& rng, int z_dim, double truncation);

/// Categorical draw proportional to `weights` (length = number of classes).
ClassLabel sample_class(std::uint64_t seed, std::span<const double> weights);
ClassLabel sample_class(std::mt19937_64& rng, std::span<const double> weights);

std::vector<double> uniform_class_weights(int num_classes);

/// Independent (z, y) pairs. Empty `class_weights` means uniform over num_classes.
std::vector<LatentSample> make_batch(std::uint64_t seed, int batch_size, int z_dim,
                                     double truncation, int num_classes,
                                     std::span<const double> class_weights = {});

/// Packs latents as a (batch, z_dim) tensor.
template <typename T>
Tensor<T> latents_to_tensor(std::span<const LatentSample> batch);
std::vector<int> labels_of(std::span<const LatentSample> batch);

}  // namespace gandistill
