#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gandistill/models.hpp"
#include "gandistill/tensor.hpp"

namespace gandistill {

/// Linear decay of the pixel weight from `initial` to 0 over `horizon` steps.
struct Lambda1Schedule {
  double initial = 10.0;
  std::int64_t horizon = 0;  // 0 disables decay
};

double decay_lambda1(std::int64_t step, const Lambda1Schedule& schedule);

enum class AlphaMode { kGeometric, kUniform, kCustom };

AlphaMode alpha_mode_from_string(const std::string& s);
std::string to_string(AlphaMode mode);

/// alpha_i proportional to 2^(i - L) for layer i = 1..L, normalized to sum 1.
std::vector<double> geometric_alpha(int num_layers);
std::vector<double> uniform_alpha(int num_layers);

struct LossWeights {
  double lambda1 = 10.0;  // pixel KD (current value; see schedule)
  double lambda2 = 1.0;   // adversarial KD, generator side
  double lambda3 = 1.0;   // real-data GAN, generator side
  double lambda4 = 1.0;   // real-data GAN, discriminator side
  std::vector<double> alpha;
  Lambda1Schedule lambda1_schedule;

  /// Throws InvalidArgument naming the offending field.
  void validate(int num_feature_taps) const;
};

struct GeneratorTerms {
  double feat = 0;   // L_KD_feat
  double pix = 0;    // L_KD_pix
  double kd_s = 0;   // L_KD_S
  double gan_s = 0;  // L_GAN_S
};

struct DiscriminatorTerms {
  double kd_d = 0;   // L_KD_D
  double gan_d = 0;  // L_GAN_D
};

/// L_S = L_feat + l1 L_pix + l2 L_KD_S + l3 L_GAN_S
double full_g_loss(const GeneratorTerms& terms, const LossWeights& w);
/// L_D = L_KD_D + l4 L_GAN_D
double full_d_loss(const DiscriminatorTerms& terms, const LossWeights& w);

struct LossReport {
  std::int64_t step = 0;
  GeneratorTerms g;
  DiscriminatorTerms d;
  double lambda1 = 0;
  double total_g = 0;
  double total_d = 0;
};

LossReport make_report(std::int64_t step, const GeneratorTerms& g, const DiscriminatorTerms& d,
                       const LossWeights& w);

// --- Individual terms. Each returns its value and the gradient w.r.t. the
// student-side (and, for D losses, both) inputs.

template <typename T>
struct PixelLoss {
  double value = 0;
  Tensor<T> grad_student;
};

/// Mean absolute per-element difference between teacher and student images.
template <typename T>
PixelLoss<T> pixel_kd_loss(const Tensor<T>& teacher, const Tensor<T>& student);

template <typename T>
struct ScoreLoss {
  double value = 0;
  std::vector<T> grad_real;  // w.r.t. the "real" scores (teacher or dataset)
  std::vector<T> grad_fake;  // w.r.t. the student scores
};

/// -mean(scores); also serves as L_GAN_S.
template <typename T>
ScoreLoss<T> adv_kd_g_loss(std::span<const T> student_scores);

/// Shared hinge kernel: mean max(0, 1 - real) + mean max(0, 1 + fake).
template <typename T>
ScoreLoss<T> hinge_d_loss(std::span<const T> real_scores, std::span<const T> fake_scores);

/// Teacher outputs play the real side.
template <typename T>
ScoreLoss<T> adv_kd_d_loss(std::span<const T> teacher_scores, std::span<const T> student_scores);

/// Dataset images play the real side.
template <typename T>
ScoreLoss<T> real_gan_d_loss(std::span<const T> real_scores, std::span<const T> student_scores);

template <typename T>
struct FeatureLoss {
  double value = 0;
  FeatureStack<T> grad_student;
};

/// sum_i alpha_i * mean|D_i(T) - D_i(S)|
template <typename T>
FeatureLoss<T> feature_kd_loss(const FeatureStack<T>& teacher, const FeatureStack<T>& student,
                               std::span<const double> alpha);

}  // namespace gandistill
