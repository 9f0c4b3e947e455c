#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "gandistill/dataset.hpp"
#include "gandistill/layers.hpp"
#include "gandistill/metrics.hpp"

namespace gandistill {

/// Small convolutional classifier used as the metric feature extractor.
/// Embedding = globally averaged activations of the last conv layer.
class ConvClassifier final : public FeatureExtractor {
 public:
  ConvClassifier(int num_classes, int resolution, int width, std::uint64_t seed);

  int feature_dim() const override { return 4 * width_; }
  int num_classes() const override { return num_classes_; }
  int resolution() const { return resolution_; }
  int width() const { return width_; }

  Eigen::MatrixXd embed(const Tensor<float>& images) override;
  Eigen::MatrixXd classify(const Tensor<float>& images) override;

  /// Logits (N, C); keeps activations for backward.
  Tensor<float> forward(const Tensor<float>& images);
  /// Softmax cross-entropy averaged over the batch; accumulates gradients.
  double train_loss(const Tensor<float>& images, std::span<const int> labels);

  ParamList<float> params();

 private:
  Tensor<float> features(const Tensor<float>& images);

  int num_classes_, resolution_, width_;
  nn::Conv2d<float> c1_, c2_, c3_, c4_;
  nn::Linear<float> fc_;
  Tensor<float> a1_, a2_, a3_, a4_;
};

struct ClassifierTrainConfig {
  int width = 16;
  int steps = 600;
  int batch_size = 64;
  double lr = 1e-3;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
};

struct ClassifierReport {
  double heldout_accuracy = 0;
  std::int64_t heldout_count = 0;
  double final_loss = 0;
};

/// Trains on all but the last `holdout_fraction` of each class and reports
/// accuracy on the held-out remainder.
ClassifierReport train_classifier(ConvClassifier& net, const DistillDataset& data,
                                  const ClassifierTrainConfig& cfg);

void save_classifier(const std::filesystem::path& path, ConvClassifier& net,
                     const ClassifierReport& report);
std::unique_ptr<ConvClassifier> load_classifier(const std::filesystem::path& path,
                                                ClassifierReport* report = nullptr);

/// Held-out accuracy required before a classifier may be used for metrics.
inline constexpr double kMinClassifierAccuracy = 0.95;

}  // namespace gandistill
