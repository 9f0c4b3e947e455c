#include "gandistill/sampling.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "gandistill/random.hpp"

namespace gandistill {

namespace {

void validate_weights(std::span<const double> weights) {
  if (weights.empty()) throw InvalidArgument("class weights must not be empty");
  double total = 0;
  for (double w : weights) {
    if (!(w >= 0) || !std::isfinite(w))
      throw InvalidArgument("class weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0)) throw InvalidArgument("class weights must have a positive sum");
}

}  // namespace

LatentVector sample_truncated_normal(std::mt19937_64& rng, int z_dim, double truncation) {
  if (z_dim < 1) throw InvalidArgument("z_dim must be >= 1, got " + std::to_string(z_dim));
  if (!(truncation > 0)) throw InvalidArgument("truncation must be positive");
  LatentVector z;
  z.truncation = truncation;
  z.values.resize(z_dim);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : z.values) {
    float draw;
    do {
      draw = static_cast<float>(normal(rng));
    } while (std::abs(static_cast<double>(draw)) > truncation);
    v = draw;
  }
  return z;
}

LatentVector sample_truncated_normal(std::uint64_t seed, int z_dim, double truncation) {
  std::mt19937_64 rng(seed);
  return sample_truncated_normal(rng, z_dim, truncation);
}

ClassLabel sample_class(std::mt19937_64& rng, std::span<const double> weights) {
  validate_weights(weights);
  std::discrete_distribution<int> dist(weights.begin(), weights.end());
  return ClassLabel{dist(rng)};
}

ClassLabel sample_class(std::uint64_t seed, std::span<const double> weights) {
  std::mt19937_64 rng(seed);
  return sample_class(rng, weights);
}

std::vector<double> uniform_class_weights(int num_classes) {
  if (num_classes < 1) throw InvalidArgument("num_classes must be >= 1");
  return std::vector<double>(num_classes, 1.0);
}

std::vector<LatentSample> make_batch(std::uint64_t seed, int batch_size, int z_dim,
                                     double truncation, int num_classes,
                                     std::span<const double> class_weights) {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  std::vector<double> uniform;
  if (class_weights.empty()) {
    uniform = uniform_class_weights(num_classes);
    class_weights = uniform;
  } else if (static_cast<int>(class_weights.size()) != num_classes) {
    throw InvalidArgument("class_weights length must equal num_classes");
  }
  validate_weights(class_weights);
  std::discrete_distribution<int> classes(class_weights.begin(), class_weights.end());
  std::mt19937_64 rng(seed);
  std::vector<LatentSample> batch;
  batch.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) {
    LatentSample s;
    s.z = sample_truncated_normal(rng, z_dim, truncation);
    s.y = ClassLabel{classes(rng)};
    batch.push_back(std::move(s));
  }
  return batch;
}

template <typename T>
Tensor<T> latents_to_tensor(std::span<const LatentSample> batch) {
  if (batch.empty()) return {};
  const int d = batch.front().z.dim();
  Tensor<T> out(static_cast<int>(batch.size()), d);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].z.dim() != d) throw InvalidArgument("latent batch has mixed dimensions");
    std::transform(batch[i].z.values.begin(), batch[i].z.values.end(),
                   out.sample(static_cast<int>(i)), [](float v) { return static_cast<T>(v); });
  }
  return out;
}

std::vector<int> labels_of(std::span<const LatentSample> batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(s.y.index);
  return out;
}

template Tensor<float> latents_to_tensor<float>(std::span<const LatentSample>);
template Tensor<double> latents_to_tensor<double>(std::span<const LatentSample>);

}  // namespace gandistill
