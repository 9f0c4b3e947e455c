#include <doctest.h>

#include <numeric>

#include "gandistill/errors.hpp"
#include "gandistill/models.hpp"
#include "gandistill/sampling.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace gandistill;

namespace {

template <typename T>
Tensor<T> random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<T> t(n, c, h, w);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.vec()) v = static_cast<T>(d(rng));
  return t;
}

double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Central differences of an O(1) loss carry ~1e-8 of rounding noise, which
// dominates for parameters whose true gradient is zero (biases feeding a BN).
constexpr double kGradFloor = 1e-4;

/// Checks a few entries of every parameter tensor against central differences.
/// Returns the worst relative error seen.
double check_param_grads(ParamList<double> params, const std::function<double()>& loss, std::mt19937_64& rng,
                         int per_tensor = 3) {
  double worst = 0;
  for (const auto& p : params) {
    std::uniform_int_distribution<std::size_t> pick(0, p.value->size() - 1);
    for (int k = 0; k < per_tensor; ++k) {
      const std::size_t i = pick(rng);
      const double numeric = oracle::central_diff(loss, &(*p.value)[i]);
      const double err = oracle::rel_err((*p.grad)[i], numeric, kGradFloor);
      if (err > 1e-3) MESSAGE(p.name << "[" << i << "] analytic " << (*p.grad)[i] << " numeric " << numeric);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("student_models") {
  TEST_CASE("full-scale parameter counts") {
    const auto count = [](int ch, ConvKind k) {
      Generator<float> g(GeneratorSpec::full_scale(ch, k), 0);
      return static_cast<double>(count_params(g));
    };
    CHECK(std::abs(count(32, ConvKind::kStandard) / 9.3e6 - 1) <= 0.05);
    CHECK(std::abs(count(32, ConvKind::kDepthwiseSeparable) / 3.1e6 - 1) <= 0.05);
    CHECK(std::abs(count(16, ConvKind::kStandard) / 2.9e6 - 1) <= 0.05);
    // Against the 50.4M-parameter teacher: ~18% and ~6%.
    CHECK(count(32, ConvKind::kStandard) / 50.4e6 == doctest::Approx(0.18).epsilon(0.1));
    CHECK(count(32, ConvKind::kDepthwiseSeparable) / 50.4e6 == doctest::Approx(0.06).epsilon(0.1));
  }

  TEST_CASE("parameter list matches an independent enumeration") {
    for (auto kind : {ConvKind::kStandard, ConvKind::kDepthwiseSeparable})
      for (int blocks : {1, 3, 5})
        for (int ch : {1, 4, 32}) {
          GeneratorSpec s;
          s.z_dim = 20;
          s.num_classes = 7;
          s.embedding_dim = 9;
          s.channel_multiplier = ch;
          s.num_res_blocks = blocks;
          s.conv_kind = kind;
          s.output_resolution = 4 << blocks;
          Generator<float> g(s, 1);
          const oracle::GeneratorCount ref{20, 7, 9, ch, blocks, kind == ConvKind::kDepthwiseSeparable};
          CHECK(count_params(g) == ref.total());
        }
  }

  TEST_CASE("depthwise/standard ratio per layer") {
    for (int o : {8, 32, 128}) {
      const double ratio = double(conv_weight_count(ConvKind::kDepthwiseSeparable, o, o, 3)) /
                           double(conv_weight_count(ConvKind::kStandard, o, o, 3));
      CHECK(ratio == doctest::Approx(1.0 / o + 1.0 / 9).epsilon(1e-12));
    }
    const double r32 = double(conv_weight_count(ConvKind::kDepthwiseSeparable, 32, 32, 3)) /
                       double(conv_weight_count(ConvKind::kStandard, 32, 32, 3));
    CHECK(r32 == doctest::Approx(0.1424).epsilon(1e-3));
    // Enumerate the weights of real layers.
    std::mt19937_64 rng(0);
    nn::SpatialConv<float> std_conv(ConvKind::kStandard, 32, 32, 3, rng), dw_conv(ConvKind::kDepthwiseSeparable, 32, 32, 3, rng);
    ParamList<float> ps, pd;
    std_conv.params(ps, "s");
    dw_conv.params(pd, "d");
    const auto weights_only = [](const ParamList<float>& l) {
      std::int64_t n = 0;
      for (const auto& p : l)
        if (p.name.ends_with(".weight")) n += static_cast<std::int64_t>(p.value->size());
      return n;
    };
    CHECK(double(weights_only(pd)) / double(weights_only(ps)) == doctest::Approx(1.0 / 32 + 1.0 / 9).epsilon(1e-12));
  }

  TEST_CASE("linear layer parameter count") {
    std::mt19937_64 rng(0);
    nn::Linear<float> l(7, 5, true, nn::Init::kXavierUniform, rng);
    ParamList<float> p;
    l.params(p, "l");
    CHECK(count_elements(p) == 7 * 5 + 5);
  }

  TEST_CASE("spec validation") {
    GeneratorSpec s = tiny_generator_spec();
    s.output_resolution = 32;
    CHECK_THROWS_AS(Generator<float>(s, 0), InvalidArgument);
    s = tiny_generator_spec();
    s.channel_multiplier = 0;
    CHECK_THROWS_AS(Generator<float>(s, 0), InvalidArgument);
    DiscriminatorSpec d = tiny_discriminator_spec();
    d.num_strided_layers = 0;
    CHECK_THROWS_AS(Discriminator<float>(d, 0), InvalidArgument);
  }

  TEST_CASE("generator forward contract") {
    const auto spec = tiny_generator_spec();
    Generator<float> g(spec, 3);
    const auto batch = make_batch(1, 6, spec.z_dim, 2.0, spec.num_classes);
    const auto z = latents_to_tensor<float>(batch);
    auto labels = labels_of(batch);
    const auto img = g.forward(z, labels, Mode::kTrain);
    CHECK(img.shape() == std::array<int, 4>{6, 3, 16, 16});
    for (float v : img.vec()) CHECK(std::abs(v) <= 1.0f);

    const auto e1 = g.forward(z, labels, Mode::kEval);
    CHECK(e1.vec() == g.forward(z, labels, Mode::kEval).vec());

    // Eval mode: permuting the batch permutes the outputs (up to GEMM blocking differences).
    std::vector<int> perm{5, 2, 0, 4, 1, 3};
    Tensor<float> zp(6, spec.z_dim);
    std::vector<int> lp(6);
    for (int i = 0; i < 6; ++i) {
      std::copy_n(z.sample(perm[i]), spec.z_dim, zp.sample(i));
      lp[i] = labels[perm[i]];
    }
    const auto ep = g.forward(zp, lp, Mode::kEval);
    double worst = 0;
    for (int i = 0; i < 6; ++i)
      for (std::size_t k = 0; k < ep.sample_size(); ++k)
        worst = std::max(worst, double(std::abs(ep.sample(i)[k] - e1.sample(perm[i])[k])));
    CHECK(worst <= 1e-5);

    labels[0] = spec.num_classes;
    CHECK_THROWS_AS(g.forward(z, labels, Mode::kEval), InvalidArgument);
  }

  TEST_CASE("class enters only through conditional normalization") {
    const auto spec = tiny_generator_spec();
    Generator<float> g(spec, 3);
    g.embedding().weight.zero();
    const auto z = latents_to_tensor<float>(make_batch(4, 4, spec.z_dim, 2.0, spec.num_classes));
    const std::vector<int> a{0, 0, 0, 0}, b{1, 2, 1, 2};
    CHECK(g.forward(z, a, Mode::kTrain).vec() == g.forward(z, b, Mode::kTrain).vec());
    CHECK(g.forward(z, a, Mode::kEval).vec() == g.forward(z, b, Mode::kEval).vec());
  }

  TEST_CASE("generator gradients match finite differences (64-bit)") {
    for (auto kind : {ConvKind::kStandard, ConvKind::kDepthwiseSeparable}) {
      const auto spec = tiny_generator_spec(kind);
      Generator<double> g(spec, 11);
      std::mt19937_64 rng(4);
      const auto batch = make_batch(9, 4, spec.z_dim, 2.0, spec.num_classes);
      const auto z = latents_to_tensor<double>(batch);
      const auto labels = labels_of(batch);
      const auto r = random_tensor<double>(4, 3, 16, 16, rng);
      auto loss = [&] { return dot(g.forward(z, labels, Mode::kTrain), r); };
      zero_grads(g.params());
      loss();
      g.backward(r);
      CHECK(check_param_grads(g.params(), loss, rng) <= 1e-3);
    }
  }

  TEST_CASE("discriminator gradients match finite differences (64-bit)") {
    const auto spec = tiny_discriminator_spec();
    Discriminator<double> d(spec, 5);
    d.refresh_spectral(5, 1e-14);  // converged u, v: their dependence on W drops out to first order
    std::vector<Tensor<double>> saved;
    for (const auto& b : d.buffers()) saved.push_back(*b.value);
    auto restore = [&] {
      auto bufs = d.buffers();
      for (std::size_t i = 0; i < bufs.size(); ++i) *bufs[i].value = saved[i];
    };
    std::mt19937_64 rng(8);
    auto x = random_tensor<double>(3, 3, 16, 16, rng, 0.5);
    const std::vector<int> labels{0, 2, 1};
    std::vector<double> rs{0.7, -1.3, 0.4};
    FeatureStack<double> rf;
    {
      restore();
      d.refresh_spectral(1);
      for (const auto& f : d.forward(x, labels).features) rf.push_back(random_tensor<double>(f.n(), f.c(), f.h(), f.w(), rng));
    }
    auto loss = [&] {
      restore();
      d.refresh_spectral(1);
      const auto out = d.forward(x, labels);
      double l = 0;
      for (int i = 0; i < 3; ++i) l += rs[i] * out.scores[i];
      for (std::size_t k = 0; k < rf.size(); ++k) l += dot(out.features[k], rf[k]);
      return l;
    };
    zero_grads(d.params());
    loss();
    const auto gx = d.backward(rs, rf);
    CHECK(check_param_grads(d.params(), loss, rng, 4) <= 1e-3);
    double worst = 0;
    for (std::size_t i : {0ul, 100ul, 517ul, 2000ul}) worst = std::max(worst, oracle::rel_err(gx[i], oracle::central_diff(loss, &x[i])));
    CHECK(worst <= 1e-3);
  }

  TEST_CASE("spectral bound against an exact SVD") {
    DiscriminatorSpec spec;
    spec.channel_multiplier = 8;
    for (int s = 0; s < 10; ++s) {
      Discriminator<double> d(spec, 100 + s);
      d.refresh_spectral(5, 1e-10);
      for (const auto* sn : d.spectral_layers()) {
        const auto& w = sn->normalized();
        const int rows = w.n();
        Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>> m(w.data(), rows, w.size() / rows);
        const double top = oracle::sigma_max(m);
        CHECK(top <= 1 + 1e-3);
        CHECK(top >= 1 - 1e-6);  // power iteration never overestimates sigma
      }
    }
    std::mt19937_64 rng(1);
    nn::Linear<double> l(6, 4, false, nn::Init::kXavierUniform, rng);
    l.enable_spectral_norm(3);
    CHECK_THROWS_AS(l.refresh_spectral(0), InvalidArgument);
  }

  TEST_CASE("projection head algebra") {
    const auto spec = tiny_discriminator_spec();
    Discriminator<double> d(spec, 2);
    std::mt19937_64 rng(2);
    const auto x = random_tensor<double>(2, 3, 16, 16, rng, 0.5);
    const auto a = d.forward(x, std::vector<int>{0, 0});
    const auto b = d.forward(x, std::vector<int>{1, 2});
    CHECK(a.features.size() == 3);
    // phi recovered from the last tap: spatial sum.
    const auto& last = a.features.back();
    const auto& e = d.projection().effective_weight();
    for (int i = 0; i < 2; ++i) {
      const int y = i == 0 ? 1 : 2;
      double expect = 0;
      for (int c = 0; c < last.c(); ++c) {
        double phi = 0;
        for (int p = 0; p < last.h() * last.w(); ++p) phi += last.at(i, c, p / last.w(), p % last.w());
        expect += (e.at(y, c) - e.at(0, c)) * phi;
      }
      CHECK(b.scores[i] - a.scores[i] == doctest::Approx(expect).epsilon(1e-10));
      CHECK(std::isfinite(a.scores[i]));
    }
    d.projection().weight.zero();
    d.refresh_spectral(1);
    CHECK(d.forward(x, std::vector<int>{0, 0}).scores == d.forward(x, std::vector<int>{2, 1}).scores);
  }

  TEST_CASE("desk-scale discriminator is small next to the generator") {
    GeneratorSpec gs;  // desk defaults, 32x32
    gs.conv_kind = ConvKind::kStandard;
    gs.channel_multiplier = 64;
    Generator<float> teacher_sized(gs, 0);
    Discriminator<float> d(DiscriminatorSpec{}, 0);
    CHECK(count_params(d) * 10 < count_params(teacher_sized));
  }

  TEST_CASE("FLOPs are twice the multiply-accumulates") {
    Generator<float> g(tiny_generator_spec(), 0);
    CHECK(count_flops(g) == 2 * g.macs());
    CHECK(g.macs() > 0);
  }
}
