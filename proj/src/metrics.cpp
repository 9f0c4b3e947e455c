#include "gandistill/metrics.hpp"

#include <cmath>
#include <string>

#include "gandistill/errors.hpp"

namespace gandistill {

ScoreSummary inception_score(const Eigen::MatrixXd& probs, int splits) {
  const Eigen::Index n = probs.rows();
  if (n == 0) throw InvalidArgument("inception_score: no images");
  if (splits < 1) throw InvalidArgument("inception_score: splits must be >= 1");
  if (n < 2 * static_cast<Eigen::Index>(splits))
    throw InvalidArgument("inception_score: need at least 2 images per split (" + std::to_string(n) +
                          " images, " + std::to_string(splits) + " splits)");
  if (!probs.allFinite() || (probs.array() < 0).any())
    throw InvalidArgument("inception_score: probabilities must be finite and non-negative");

  std::vector<double> scores;
  for (int s = 0; s < splits; ++s) {
    const Eigen::Index begin = n * s / splits, end = n * (s + 1) / splits;
    const auto part = probs.middleRows(begin, end - begin);
    const Eigen::RowVectorXd marginal = part.colwise().mean();
    double kl_sum = 0;
    for (Eigen::Index i = 0; i < part.rows(); ++i)
      for (Eigen::Index c = 0; c < part.cols(); ++c) {
        const double p = part(i, c);
        if (p > 0) kl_sum += p * (std::log(p) - std::log(marginal(c)));
      }
    scores.push_back(std::exp(kl_sum / static_cast<double>(part.rows())));
  }
  ScoreSummary out;
  for (double v : scores) out.mean += v;
  out.mean /= splits;
  for (double v : scores) out.std += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(out.std / splits);
  return out;
}

GaussianStats gaussian_stats(const Eigen::MatrixXd& features) {
  const Eigen::Index n = features.rows();
  if (n < 2) throw InvalidArgument("gaussian_stats: need at least 2 samples, got " + std::to_string(n));
  if (!features.allFinite()) throw NumericalError("gaussian_stats: non-finite feature values");
  GaussianStats g;
  g.count = n;
  g.mu = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - g.mu.transpose();
  g.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  g.sigma = 0.5 * (g.sigma + g.sigma.transpose());
  return g;
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success)
    throw NumericalError(std::string("eigendecomposition did not converge (") + what + ")");
  return es;
}

Eigen::MatrixXd psd_sqrt(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es) {
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

void require_square(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) {
  if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows())
    throw InvalidArgument(std::string(op) + ": dimension mismatch");
}

}  // namespace

Eigen::MatrixXd sqrt_of_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require_square(a, b, "sqrt_of_product");
  const auto ea = eig(a, "a");
  const Eigen::VectorXd lam = ea.eigenvalues();
  if (lam.minCoeff() <= 0) throw NumericalError("sqrt_of_product: a is not positive definite");
  const Eigen::MatrixXd& v = ea.eigenvectors();
  const Eigen::MatrixXd s = v * lam.cwiseSqrt().asDiagonal() * v.transpose();
  const Eigen::MatrixXd s_inv = v * lam.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
  const Eigen::MatrixXd inner = psd_sqrt(eig(s * b * s, "a^1/2 b a^1/2"));
  return s * inner * s_inv;
}

FrechetDetail frechet_distance_detail(const GaussianStats& a, const GaussianStats& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("frechet_distance: feature dimensions differ");
  require_square(a.sigma, b.sigma, "frechet_distance");
  if (a.sigma.rows() != a.dim()) throw InvalidArgument("frechet_distance: covariance/mean mismatch");

  FrechetDetail d;
  d.mean_term = (a.mu - b.mu).squaredNorm();
  const Eigen::MatrixXd sa = psd_sqrt(eig(a.sigma, "sigma_a"));
  const auto inner = eig(sa * b.sigma * sa, "sigma_a^1/2 sigma_b sigma_a^1/2");
  const double tr_root = inner.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double tr_sum = a.sigma.trace() + b.sigma.trace();
  d.trace_term = tr_sum - 2.0 * tr_root;
  const double total = d.mean_term + d.trace_term;
  if (!std::isfinite(total)) throw NumericalError("frechet_distance: non-finite result");
  if (total < 0) {
    if (total < -kFrechetClampTolerance * std::max(1.0, tr_sum))
      throw NumericalError("frechet_distance: negative residue " + std::to_string(total) +
                           " exceeds the clamp tolerance");
    d.clamped = -total;
    d.value = 0;
  } else {
    d.value = total;
  }
  return d;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  return frechet_distance_detail(a, b).value;
}

namespace {

template <typename F>
Eigen::MatrixXd chunked(const Tensor<float>& images, int chunk, int cols, F&& fn) {
  if (chunk < 1) throw InvalidArgument("chunk must be >= 1");
  Eigen::MatrixXd out(images.n(), cols);
  for (int start = 0; start < images.n(); start += chunk) {
    const int b = std::min(chunk, images.n() - start);
    Tensor<float> part(b, images.c(), images.h(), images.w());
    std::copy_n(images.sample(start), part.size(), part.data());
    const Eigen::MatrixXd rows = fn(part);
    if (rows.rows() != b || rows.cols() != cols)
      throw InvalidArgument("feature extractor returned unexpected shape");
    out.middleRows(start, b) = rows;
  }
  return out;
}

}  // namespace

Eigen::MatrixXd embed_all(FeatureExtractor& fe, const Tensor<float>& images, int chunk) {
  return chunked(images, chunk, fe.feature_dim(), [&](const Tensor<float>& x) { return fe.embed(x); });
}

Eigen::MatrixXd classify_all(FeatureExtractor& fe, const Tensor<float>& images, int chunk) {
  return chunked(images, chunk, fe.num_classes(), [&](const Tensor<float>& x) { return fe.classify(x); });
}

double fid(const Tensor<float>& reference, const Tensor<float>& generated, FeatureExtractor& fe) {
  return frechet_distance(gaussian_stats(embed_all(fe, reference)),
                          gaussian_stats(embed_all(fe, generated)));
}

std::vector<GaussianStats> class_stats(const Eigen::MatrixXd& features, std::span<const int> labels,
                                       int num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows())
    throw InvalidArgument("class_stats: label count differs from feature rows");
  std::vector<std::vector<Eigen::Index>> rows(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw InvalidArgument("class_stats: label out of range");
    rows[labels[i]].push_back(static_cast<Eigen::Index>(i));
  }
  std::string missing;
  for (int c = 0; c < num_classes; ++c)
    if (rows[c].size() < 2) missing += (missing.empty() ? "" : ",") + std::to_string(c);
  if (!missing.empty())
    throw InvalidArgument("classes with fewer than 2 images: " + missing);
  std::vector<GaussianStats> out;
  for (int c = 0; c < num_classes; ++c) out.push_back(gaussian_stats(features(rows[c], Eigen::all)));
  return out;
}

IntraFid intra_fid_from_stats(const std::vector<GaussianStats>& reference,
                              const std::vector<GaussianStats>& generated) {
  if (reference.size() != generated.size() || reference.empty())
    throw InvalidArgument("intra_fid: class sets differ");
  IntraFid r;
  for (std::size_t c = 0; c < reference.size(); ++c) {
    r.per_class.push_back(frechet_distance(reference[c], generated[c]));
    r.mean += r.per_class.back();
  }
  r.mean /= static_cast<double>(r.per_class.size());
  return r;
}

IntraFid intra_fid(const Tensor<float>& reference, std::span<const int> reference_labels,
                   const Tensor<float>& generated, std::span<const int> generated_labels,
                   int num_classes, FeatureExtractor& fe) {
  return intra_fid_from_stats(class_stats(embed_all(fe, reference), reference_labels, num_classes),
                              class_stats(embed_all(fe, generated), generated_labels, num_classes));
}

}  // namespace gandistill
