#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "gandistill/models.hpp"
#include "gandistill/sampling.hpp"
#include "gandistill/tensor.hpp"

namespace gandistill {

/// (1, 3, R, R) or (N, 3, R, R) float images with pixels in [-1, 1].
using ImageTensor = Tensor<float>;

/// Black-box (z, y) -> image interface. Exposes no parameters, gradients or
/// activations. Every generate call is counted process-wide.
class TeacherOracle {
 public:
  virtual ~TeacherOracle() = default;

  ImageTensor generate(const LatentVector& z, ClassLabel y) const;
  ImageTensor generate_batch(std::span<const LatentSample> batch) const;

  virtual int image_resolution() const = 0;
  virtual int num_classes() const = 0;

  /// Total generate() calls across all oracles since process start.
  static std::int64_t invocation_count();

 protected:
  virtual void render(std::span<const LatentSample> batch, float* out) const = 0;

 private:
  static std::atomic<std::int64_t> invocations_;
};

/// Procedural stand-in teacher: a class-coloured striped shape whose
/// position, size, stripe phase/frequency and background are smooth
/// functions of the first eight latent coordinates.
class SyntheticTeacher final : public TeacherOracle {
 public:
  static constexpr int kLatentsUsed = 8;

  SyntheticTeacher(int num_classes, int resolution, std::uint64_t seed);

  int image_resolution() const override { return resolution_; }
  int num_classes() const override { return num_classes_; }

 protected:
  void render(std::span<const LatentSample> batch, float* out) const override;

 private:
  struct ClassStyle {
    float rgb[3];
    float orientation;
    float frequency;
    bool square;
  };

  void render_one(const LatentVector& z, int y, float* out) const;

  int num_classes_;
  int resolution_;
  std::vector<ClassStyle> styles_;
};

std::unique_ptr<TeacherOracle> make_synthetic_teacher(int num_classes, int resolution,
                                                      std::uint64_t seed);

/// Wraps a checkpointed generator as a frozen black box (eval mode).
std::unique_ptr<TeacherOracle> make_trained_teacher(const std::filesystem::path& checkpoint);

}  // namespace gandistill
