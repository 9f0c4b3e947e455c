#include "gandistill/losses.hpp"

#include <cmath>

namespace gandistill {

double decay_lambda1(std::int64_t step, const Lambda1Schedule& schedule) {
  if (step < 0) throw InvalidArgument("decay_lambda1: step must be >= 0");
  if (schedule.horizon <= 0) return schedule.initial;
  if (step >= schedule.horizon) return 0.0;
  return schedule.initial * (1.0 - static_cast<double>(step) / static_cast<double>(schedule.horizon));
}

AlphaMode alpha_mode_from_string(const std::string& s) {
  if (s == "geometric") return AlphaMode::kGeometric;
  if (s == "uniform") return AlphaMode::kUniform;
  if (s == "custom") return AlphaMode::kCustom;
  throw InvalidArgument("unknown alpha_mode '" + s + "'");
}

std::string to_string(AlphaMode mode) {
  switch (mode) {
    case AlphaMode::kGeometric: return "geometric";
    case AlphaMode::kUniform: return "uniform";
    case AlphaMode::kCustom: return "custom";
  }
  return "geometric";
}

std::vector<double> geometric_alpha(int num_layers) {
  if (num_layers < 1) throw InvalidArgument("alpha needs at least one layer");
  std::vector<double> a(num_layers);
  double total = 0;
  for (int i = 1; i <= num_layers; ++i) total += a[i - 1] = std::ldexp(1.0, i - num_layers);
  for (auto& v : a) v /= total;
  return a;
}

std::vector<double> uniform_alpha(int num_layers) {
  if (num_layers < 1) throw InvalidArgument("alpha needs at least one layer");
  return std::vector<double>(num_layers, 1.0 / num_layers);
}

void LossWeights::validate(int num_feature_taps) const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0)
      throw InvalidArgument(std::string(name) + " must be finite and non-negative");
  };
  check(lambda1, "lambda1");
  check(lambda2, "lambda2");
  check(lambda3, "lambda3");
  check(lambda4, "lambda4");
  check(lambda1_schedule.initial, "lambda1_init");
  if (lambda1_schedule.horizon < 0) throw InvalidArgument("lambda1 decay horizon must be >= 0");
  if (static_cast<int>(alpha.size()) != num_feature_taps)
    throw InvalidArgument("alpha has " + std::to_string(alpha.size()) + " entries but there are " +
                          std::to_string(num_feature_taps) + " feature taps");
  for (double a : alpha) check(a, "alpha");
}

double full_g_loss(const GeneratorTerms& t, const LossWeights& w) {
  return t.feat + w.lambda1 * t.pix + w.lambda2 * t.kd_s + w.lambda3 * t.gan_s;
}

double full_d_loss(const DiscriminatorTerms& t, const LossWeights& w) {
  return t.kd_d + w.lambda4 * t.gan_d;
}

LossReport make_report(std::int64_t step, const GeneratorTerms& g, const DiscriminatorTerms& d,
                       const LossWeights& w) {
  LossReport r;
  r.step = step;
  r.g = g;
  r.d = d;
  r.lambda1 = w.lambda1;
  r.total_g = full_g_loss(g, w);
  r.total_d = full_d_loss(d, w);
  return r;
}

template <typename T>
PixelLoss<T> pixel_kd_loss(const Tensor<T>& teacher, const Tensor<T>& student) {
  if (!teacher.same_shape(student))
    throw InvalidArgument("pixel loss: shape mismatch " + teacher.shape_string() + " vs " +
                          student.shape_string());
  PixelLoss<T> out;
  out.grad_student = Tensor<T>(student.n(), student.c(), student.h(), student.w());
  if (student.size() == 0) return out;
  const double inv = 1.0 / static_cast<double>(student.size());
  double sum = 0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double d = static_cast<double>(student[i]) - static_cast<double>(teacher[i]);
    sum += std::abs(d);
    out.grad_student[i] = static_cast<T>(d > 0 ? inv : (d < 0 ? -inv : 0.0));
  }
  out.value = sum * inv;
  return out;
}

template <typename T>
ScoreLoss<T> adv_kd_g_loss(std::span<const T> student_scores) {
  ScoreLoss<T> out;
  const std::size_t n = student_scores.size();
  if (n == 0) return out;
  double sum = 0;
  for (T s : student_scores) sum += s;
  out.value = -sum / static_cast<double>(n);
  out.grad_fake.assign(n, static_cast<T>(-1.0 / static_cast<double>(n)));
  return out;
}

template <typename T>
ScoreLoss<T> hinge_d_loss(std::span<const T> real_scores, std::span<const T> fake_scores) {
  ScoreLoss<T> out;
  out.grad_real.assign(real_scores.size(), T(0));
  out.grad_fake.assign(fake_scores.size(), T(0));
  double real_term = 0, fake_term = 0;
  if (!real_scores.empty()) {
    const double inv = 1.0 / static_cast<double>(real_scores.size());
    for (std::size_t i = 0; i < real_scores.size(); ++i) {
      const double m = 1.0 - static_cast<double>(real_scores[i]);
      if (m > 0) {
        real_term += m;
        out.grad_real[i] = static_cast<T>(-inv);
      }
    }
    real_term *= inv;
  }
  if (!fake_scores.empty()) {
    const double inv = 1.0 / static_cast<double>(fake_scores.size());
    for (std::size_t i = 0; i < fake_scores.size(); ++i) {
      const double m = 1.0 + static_cast<double>(fake_scores[i]);
      if (m > 0) {
        fake_term += m;
        out.grad_fake[i] = static_cast<T>(inv);
      }
    }
    fake_term *= inv;
  }
  out.value = real_term + fake_term;
  return out;
}

template <typename T>
ScoreLoss<T> adv_kd_d_loss(std::span<const T> teacher_scores, std::span<const T> student_scores) {
  return hinge_d_loss(teacher_scores, student_scores);
}

template <typename T>
ScoreLoss<T> real_gan_d_loss(std::span<const T> real_scores, std::span<const T> student_scores) {
  return hinge_d_loss(real_scores, student_scores);
}

template <typename T>
FeatureLoss<T> feature_kd_loss(const FeatureStack<T>& teacher, const FeatureStack<T>& student,
                               std::span<const double> alpha) {
  if (teacher.size() != student.size())
    throw InvalidArgument("feature loss: stacks have different lengths");
  if (alpha.size() != student.size())
    throw InvalidArgument("feature loss: alpha length does not match the feature stack");
  FeatureLoss<T> out;
  out.grad_student.reserve(student.size());
  for (std::size_t l = 0; l < student.size(); ++l) {
    const auto& t = teacher[l];
    const auto& s = student[l];
    if (!t.same_shape(s))
      throw InvalidArgument("feature loss: layer " + std::to_string(l) + " shape mismatch");
    Tensor<T> g(s.n(), s.c(), s.h(), s.w());
    if (s.size() > 0) {
      const double scale = alpha[l] / static_cast<double>(s.size());
      double sum = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = static_cast<double>(s[i]) - static_cast<double>(t[i]);
        sum += std::abs(d);
        g[i] = static_cast<T>(d > 0 ? scale : (d < 0 ? -scale : 0.0));
      }
      out.value += sum * scale;
    }
    out.grad_student.push_back(std::move(g));
  }
  return out;
}

#define GANDISTILL_INSTANTIATE(T)                                                          \
  template PixelLoss<T> pixel_kd_loss(const Tensor<T>&, const Tensor<T>&);                 \
  template ScoreLoss<T> adv_kd_g_loss(std::span<const T>);                                 \
  template ScoreLoss<T> hinge_d_loss(std::span<const T>, std::span<const T>);              \
  template ScoreLoss<T> adv_kd_d_loss(std::span<const T>, std::span<const T>);             \
  template ScoreLoss<T> real_gan_d_loss(std::span<const T>, std::span<const T>);           \
  template FeatureLoss<T> feature_kd_loss(const FeatureStack<T>&, const FeatureStack<T>&, \
                                          std::span<const double>);

GANDISTILL_INSTANTIATE(float)
GANDISTILL_INSTANTIATE(double)

#undef GANDISTILL_INSTANTIATE

}  // namespace gandistill
