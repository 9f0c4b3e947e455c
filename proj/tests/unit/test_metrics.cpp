#include <doctest.h>

#include "gandistill/errors.hpp"
#include "gandistill/metrics.hpp"
#include "gandistill/sampling.hpp"
#include "gandistill/random.hpp"
#include "gandistill/teacher.hpp"
#include "oracles.hpp"
#include "toy_extractor.hpp"

using namespace gandistill;

namespace {

Eigen::MatrixXd random_probs(std::mt19937_64& rng, int n, int c, double sharpness) {
  std::gamma_distribution<double> g(sharpness, 1.0);
  Eigen::MatrixXd p(n, c);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < c; ++j) p(i, j) = g(rng) + 1e-12;
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Eigen::MatrixXd random_psd(std::mt19937_64& rng, int d, int rank) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(d, rank, [&] { return n(rng); });
  return a * a.transpose() / rank;
}

GaussianStats stats_of(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  GaussianStats s;
  s.mu = mu;
  s.sigma = sigma;
  s.count = 1000;
  return s;
}

Tensor<float> teacher_images(int n, int classes, std::uint64_t seed, std::vector<int>* labels = nullptr) {
  auto t = make_synthetic_teacher(classes, 16, 1);
  std::vector<LatentSample> batch;
  for (int i = 0; i < n; ++i) batch.push_back({sample_truncated_normal(derive_seed(seed, {std::uint64_t(i)}), 8, 2.0), {i % classes}});
  if (labels) *labels = labels_of(batch);
  return t->generate_batch(batch);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("inception score closed forms") {
    const int c = 10;
    CHECK(inception_score(Eigen::MatrixXd::Constant(40, c, 1.0 / c), 4).mean == doctest::Approx(1.0).epsilon(1e-12));
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(c, c);
    for (int i = 0; i < c; ++i) onehot(i, i) = 1;
    const auto s = inception_score(onehot, 1);
    CHECK(s.mean == doctest::Approx(double(c)).epsilon(1e-12));
    CHECK(s.std == 0.0);
    CHECK_THROWS_AS(inception_score(Eigen::MatrixXd(0, c), 1), InvalidArgument);
    CHECK_THROWS_AS(inception_score(onehot, 6), InvalidArgument);
  }

  TEST_CASE("inception score matches a scalar-loop oracle") {
    std::mt19937_64 rng(3);
    const auto p = random_probs(rng, 90, 7, 0.4);
    std::vector<double> per;
    for (int s = 0; s < 3; ++s) {
      std::vector<std::vector<double>> rows(30, std::vector<double>(7));
      for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 7; ++j) rows[i][j] = p(s * 30 + i, j);
      per.push_back(oracle::inception_score_loop(rows));
    }
    const double mean = (per[0] + per[1] + per[2]) / 3;
    double var = 0;
    for (double v : per) var += (v - mean) * (v - mean) / 3;
    const auto got = inception_score(p, 3);
    CHECK(std::abs(got.mean - mean) < 1e-6);
    CHECK(std::abs(got.std - std::sqrt(var)) < 1e-6);
  }

  TEST_CASE("inception score bounds on random inputs") {
    std::mt19937_64 rng(9);
    for (int k = 0; k < 100; ++k) {
      const int c = 2 + k % 12;
      const auto p = random_probs(rng, 20 + k, c, 0.05 + 0.05 * (k % 20));
      const double is = inception_score(p, 2).mean;
      CHECK(is >= 1 - 1e-9);
      CHECK(is <= c + 1e-9);
    }
  }

  TEST_CASE("gaussian statistics") {
    Eigen::MatrixXd x(4, 2);
    x << 0, 0, 2, 0, 0, 2, 2, 2;
    const auto s = gaussian_stats(x);
    CHECK(s.mu(0) == doctest::Approx(1.0));
    CHECK(s.mu(1) == doctest::Approx(1.0));
    CHECK(s.sigma(0, 0) == doctest::Approx(4.0 / 3));
    CHECK(s.sigma(1, 1) == doctest::Approx(4.0 / 3));
    CHECK(std::abs(s.sigma(0, 1)) < 1e-15);
    Eigen::MatrixXd perm(4, 2);
    perm << 2, 2, 0, 2, 2, 0, 0, 0;
    const auto sp = gaussian_stats(perm);
    CHECK((sp.mu - s.mu).norm() < 1e-15);
    CHECK((sp.sigma - s.sigma).norm() < 1e-15);
    CHECK(gaussian_stats(Eigen::MatrixXd::Constant(5, 3, 0.7)).sigma.isZero(0));
    CHECK_THROWS_AS(gaussian_stats(Eigen::MatrixXd(1, 3)), InvalidArgument);
  }

  TEST_CASE("frechet distance closed forms") {
    std::mt19937_64 rng(1);
    const auto a = stats_of(Eigen::VectorXd::Random(6), random_psd(rng, 6, 10));
    CHECK(std::abs(frechet_distance(a, a)) <= 1e-6);
    CHECK(frechet_distance(stats_of(Eigen::VectorXd::Constant(1, 0.0), Eigen::MatrixXd::Constant(1, 1, 1.0)),
                           stats_of(Eigen::VectorXd::Constant(1, 1.0), Eigen::MatrixXd::Constant(1, 1, 1.0))) ==
          doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < 20; ++k) {
      std::uniform_real_distribution<double> u(0.01, 5);
      std::vector<double> ma(8), mb(8), va(8), vb(8);
      for (int i = 0; i < 8; ++i) ma[i] = u(rng), mb[i] = u(rng), va[i] = u(rng), vb[i] = u(rng);
      const auto sa = stats_of(Eigen::Map<Eigen::VectorXd>(ma.data(), 8), Eigen::Map<Eigen::VectorXd>(va.data(), 8).asDiagonal().toDenseMatrix());
      const auto sb = stats_of(Eigen::Map<Eigen::VectorXd>(mb.data(), 8), Eigen::Map<Eigen::VectorXd>(vb.data(), 8).asDiagonal().toDenseMatrix());
      CHECK(std::abs(frechet_distance(sa, sb) - oracle::frechet_diagonal(ma, va, mb, vb)) <= 1e-8);
    }
    CHECK_THROWS_AS(frechet_distance(a, stats_of(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3))), InvalidArgument);
  }

  TEST_CASE("frechet symmetry, non-negativity, square-root residual") {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 30; ++k) {
      const int d = 2 + k % 15;
      const auto a = stats_of(Eigen::VectorXd::Random(d), random_psd(rng, d, d + 3));
      const auto b = stats_of(Eigen::VectorXd::Random(d), random_psd(rng, d, k % 2 ? d + 3 : std::max(1, d / 2)));
      const auto ab = frechet_distance_detail(a, b);
      CHECK(ab.value >= 0);
      CHECK(ab.clamped <= 1e-4 * std::max(1.0, a.sigma.trace() + b.sigma.trace()));
      CHECK(std::abs(ab.value - frechet_distance(b, a)) <= 1e-6 * std::max(1.0, ab.value));
      const Eigen::MatrixXd prod = a.sigma * b.sigma;
      const Eigen::MatrixXd r = sqrt_of_product(a.sigma, b.sigma);
      CHECK((r * r - prod).norm() / prod.norm() <= 1e-6);
      // Trace of the root agrees with the one the distance used.
      CHECK(ab.trace_term == doctest::Approx((a.sigma + b.sigma).trace() - 2 * r.trace()).epsilon(1e-8));
    }
  }

  TEST_CASE("fid on images") {
    ProjectionExtractor fe(16, 12, 5, 4);
    const auto x = teacher_images(300, 5, 1);
    CHECK(std::abs(fid(x, x, fe)) <= 1e-6);
    Tensor<float> shuffled = x;
    std::vector<int> perm(300);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));
    for (int i = 0; i < 300; ++i) std::copy_n(x.sample(perm[i]), x.sample_size(), shuffled.sample(i));
    CHECK(std::abs(fid(x, shuffled, fe)) <= 1e-6);
  }

  TEST_CASE("mode dropping inflates FID") {
    ProjectionExtractor fe(16, 12, 5, 4);
    const auto reference = teacher_images(500, 5, 1);
    const auto diverse = teacher_images(500, 5, 2);
    Tensor<float> collapsed = diverse;  // one image per class, repeated
    for (int i = 5; i < 500; ++i) std::copy_n(diverse.sample(i % 5), diverse.sample_size(), collapsed.sample(i));
    const double f_div = fid(reference, diverse, fe), f_col = fid(reference, collapsed, fe);
    MESSAGE("FID diverse " << f_div << " collapsed " << f_col);
    CHECK(f_col > 3 * f_div);
  }

  TEST_CASE("intra-FID") {
    ProjectionExtractor fe(16, 6, 4, 4);
    std::vector<int> la, lb;
    const auto a = teacher_images(200, 4, 1, &la);
    const auto b = teacher_images(200, 4, 2, &lb);
    const auto same = intra_fid(a, la, a, la, 4, fe);
    for (double v : same.per_class) CHECK(std::abs(v) <= 1e-6);
    const auto r = intra_fid(a, la, b, lb, 4, fe);
    REQUIRE(r.per_class.size() == 4);
    double m = 0;
    for (double v : r.per_class) m += v / 4;
    CHECK(std::abs(r.mean - m) <= 1e-12);

    // Corrupt one class's statistics: the mean moves by delta / C.
    auto ref = class_stats(embed_all(fe, a), la, 4), gen = class_stats(embed_all(fe, b), lb, 4);
    const auto base = intra_fid_from_stats(ref, gen);
    gen[2].mu.array() += 3.0;
    const auto bumped = intra_fid_from_stats(ref, gen);
    const double delta = bumped.per_class[2] - base.per_class[2];
    CHECK(std::abs((bumped.mean - base.mean) - delta / 4) <= 1e-9);

    std::vector<int> lm = lb;
    for (auto& l : lm)
      if (l == 3) l = 0;
    try {
      intra_fid(a, la, b, lm, 4, fe);
      FAIL("missing class accepted");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find('3') != std::string::npos);
    }
  }

  TEST_CASE("probabilities from the toy extractor are normalized") {
    ProjectionExtractor fe(16, 6, 4, 4);
    const auto p = classify_all(fe, teacher_images(20, 4, 3));
    for (int i = 0; i < p.rows(); ++i) {
      CHECK(std::abs(p.row(i).sum() - 1) <= 1e-6);
      CHECK(p.row(i).minCoeff() >= 0);
    }
  }
}
