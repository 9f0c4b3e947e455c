#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "gandistill/tensor.hpp"

namespace gandistill {

/// Maps image batches (N, 3, R, R) to feature rows and class-probability rows.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;

  virtual int feature_dim() const = 0;
  virtual int num_classes() const = 0;
  virtual Eigen::MatrixXd embed(const Tensor<float>& images) = 0;
  virtual Eigen::MatrixXd classify(const Tensor<float>& images) = 0;
};

struct ScoreSummary {
  double mean = 0;
  double std = 0;
};

/// Rows of `probs` are p(y|x). Images are divided into `splits` contiguous
/// chunks of near-equal size; each must hold at least two images.
ScoreSummary inception_score(const Eigen::MatrixXd& probs, int splits = 10);

struct GaussianStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::int64_t count = 0;

  int dim() const { return static_cast<int>(mu.size()); }
  /// Fewer samples than dim + 1: the covariance is rank deficient.
  bool underdetermined() const { return count < dim() + 1; }
};

/// Sample mean and unbiased covariance of the rows of `features`.
GaussianStats gaussian_stats(const Eigen::MatrixXd& features);

/// Principal square root of a*b for symmetric PSD a, b, computed as
/// a^1/2 (a^1/2 b a^1/2)^1/2 a^-1/2. Requires a to be positive definite.
Eigen::MatrixXd sqrt_of_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct FrechetDetail {
  double value = 0;
  double mean_term = 0;
  double trace_term = 0;
  /// Magnitude of a small negative total that was clamped to zero.
  double clamped = 0;
};

/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^1/2). The trace of the root is
/// taken from the eigenvalues of Sa^1/2 Sb Sa^1/2 with negatives clamped.
FrechetDetail frechet_distance_detail(const GaussianStats& a, const GaussianStats& b);
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Relative tolerance for clamping a negative Frechet total to zero.
inline constexpr double kFrechetClampTolerance = 1e-4;

Eigen::MatrixXd embed_all(FeatureExtractor& fe, const Tensor<float>& images, int chunk = 256);
Eigen::MatrixXd classify_all(FeatureExtractor& fe, const Tensor<float>& images, int chunk = 256);

double fid(const Tensor<float>& reference, const Tensor<float>& generated, FeatureExtractor& fe);

struct IntraFid {
  double mean = 0;
  std::vector<double> per_class;
};

/// Class-restricted FID averaged over classes. Both sides must contain at
/// least two images of every class in [0, num_classes).
IntraFid intra_fid(const Tensor<float>& reference, std::span<const int> reference_labels,
                   const Tensor<float>& generated, std::span<const int> generated_labels,
                   int num_classes, FeatureExtractor& fe);
IntraFid intra_fid_from_stats(const std::vector<GaussianStats>& reference,
                              const std::vector<GaussianStats>& generated);

/// Per-class Gaussian fits of already-embedded features.
std::vector<GaussianStats> class_stats(const Eigen::MatrixXd& features, std::span<const int> labels,
                                       int num_classes);

}  // namespace gandistill
