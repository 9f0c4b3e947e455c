// Acceptance runner: one PASS/FAIL line per criterion, details indented below.
// Criteria 5 and 6 train desk-scale models and take a long time; select
// subsets with --only.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "gandistill/analysis.hpp"
#include "gandistill/checkpoint.hpp"
#include "gandistill/classifier.hpp"
#include "gandistill/config.hpp"
#include "gandistill/dataset.hpp"
#include "gandistill/errors.hpp"
#include "gandistill/io.hpp"
#include "gandistill/losses.hpp"
#include "gandistill/metrics.hpp"
#include "gandistill/model_io.hpp"
#include "gandistill/random.hpp"
#include "gandistill/teacher.hpp"
#include "gandistill/training.hpp"
#include "oracles.hpp"
#include "toy_extractor.hpp"

using namespace gandistill;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = true;
  std::vector<std::string> lines;
  json record = json::object();

  // Records a sub-check; every sub-check must hold.
  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    lines.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void note(const std::string& what) { lines.push_back("     " + what); }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// --- 1 -----------------------------------------------------------------------

Verdict parameter_accounting() {
  Verdict v;
  struct Row {
    int ch;
    ConvKind kind;
    double table;
  };
  for (const Row& r : {Row{32, ConvKind::kStandard, 9.3e6}, Row{32, ConvKind::kDepthwiseSeparable, 3.1e6},
                       Row{16, ConvKind::kStandard, 2.9e6}}) {
    const GeneratorSpec spec = GeneratorSpec::full_scale(r.ch, r.kind);
    Generator<float> g(spec, 0);
    const auto n = count_params(g);
    const oracle::GeneratorCount ref{spec.z_dim, spec.num_classes, spec.embedding_dim, r.ch, spec.num_res_blocks,
                                     r.kind == ConvKind::kDepthwiseSeparable};
    const double dev = static_cast<double>(n) / r.table - 1;
    v.check(std::abs(dev) <= 0.05, fmt("%s Ch=%d: %lld params vs %.1fM (%+.2f%%)", to_string(r.kind).c_str(), r.ch,
                                       static_cast<long long>(n), r.table / 1e6, 100 * dev));
    v.check(n == ref.total(), fmt("  enumeration oracle agrees (%lld)", ref.total()));
    v.record[to_string(r.kind) + "_ch" + std::to_string(r.ch)] = n;
  }

  // Per-layer ratio: pair every dense spatial conv weight of the standard model
  // with the depthwise + pointwise weights of the separable model.
  Generator<float> gs(GeneratorSpec::full_scale(32, ConvKind::kStandard), 0);
  Generator<float> gd(GeneratorSpec::full_scale(32, ConvKind::kDepthwiseSeparable), 0);
  std::map<std::string, std::int64_t> dense, sep;
  std::map<std::string, int> out_ch;
  auto stem = [](const std::string& name, const std::string& tail) {
    return name.ends_with(tail) ? name.substr(0, name.size() - tail.size()) : std::string();
  };
  for (const auto& p : gs.params())
    if (p.value->h() == 3) {
      dense[stem(p.name, ".weight")] = static_cast<std::int64_t>(p.value->size());
      out_ch[stem(p.name, ".weight")] = p.value->n();
    }
  for (const auto& p : gd.params()) {
    for (const char* tail : {".depthwise.weight", ".pointwise.weight"}) {
      const auto s = stem(p.name, tail);
      if (!s.empty()) sep[s] += static_cast<std::int64_t>(p.value->size());
    }
  }
  int exact = 0;
  double worst = 0;
  for (const auto& [name, n] : dense) {
    if (!sep.count(name)) continue;
    const double ratio = static_cast<double>(sep[name]) / static_cast<double>(n);
    const double formula = 1.0 / out_ch[name] + 1.0 / 9.0;
    worst = std::max(worst, std::abs(ratio - formula));
    exact += std::abs(ratio - formula) <= 1e-15 ? 1 : 0;
  }
  v.check(exact == static_cast<int>(dense.size()) && !dense.empty(),
          fmt("dw/std weight ratio = 1/O + 1/9 on %d/%zu spatial convs (max deviation %.1e)", exact, dense.size(),
              worst));
  return v;
}

// --- 2 -----------------------------------------------------------------------

Verdict metric_oracles() {
  Verdict v;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;

  Eigen::MatrixXd f(400, 6);
  for (int i = 0; i < f.size(); ++i) f.data()[i] = nd(rng);
  const auto s = gaussian_stats(f);
  const double self = frechet_distance(s, s);
  v.check(std::abs(self) <= 1e-6, fmt("FID of a feature set against itself: %.2e", self));
  ProjectionExtractor fe(16, 8, 4, 3);
  Tensor<float> imgs(64, 3, 16, 16);
  for (auto& x : imgs.vec()) x = static_cast<float>(std::tanh(nd(rng)));
  const double self_img = fid(imgs, imgs, fe);
  v.check(std::abs(self_img) <= 1e-6, fmt("FID of an image set against itself: %.2e", self_img));

  GaussianStats a{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1), 100};
  GaussianStats b{Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Identity(1, 1), 100};
  const double one_d = frechet_distance(a, b);
  v.check(std::abs(one_d - 1) <= 1e-12, fmt("1-D N(0,1) vs N(1,1): %.15f", one_d));

  double worst_diag = 0;
  for (int t = 0; t < 20; ++t) {
    const int d = 1 + t % 7;
    std::vector<double> ma(d), mb(d), va(d), vb(d);
    GaussianStats x{Eigen::VectorXd(d), Eigen::MatrixXd::Zero(d, d), 100}, y = x;
    std::uniform_real_distribution<double> u(0.1, 3.0);
    for (int i = 0; i < d; ++i) {
      ma[i] = x.mu[i] = nd(rng);
      mb[i] = y.mu[i] = nd(rng);
      va[i] = x.sigma(i, i) = u(rng);
      vb[i] = y.sigma(i, i) = u(rng);
    }
    worst_diag = std::max(worst_diag, std::abs(frechet_distance(x, y) - oracle::frechet_diagonal(ma, va, mb, vb)));
  }
  v.check(worst_diag <= 1e-8, fmt("diagonal-covariance closed form, 20 cases: max error %.2e", worst_diag));

  const int c = 7;
  const double uniform = inception_score(Eigen::MatrixXd::Constant(70, c, 1.0 / c), 1).mean;
  v.check(std::abs(uniform - 1) <= 1e-12, fmt("IS of uniform predictions: %.15f", uniform));
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(70, c);
  for (int i = 0; i < 70; ++i) onehot(i, i % c) = 1;
  const double distinct = inception_score(onehot, 1).mean;
  v.check(std::abs(distinct - c) <= 1e-9, fmt("IS of one-hot predictions over %d classes: %.12f", c, distinct));

  int inside = 0;
  double lo = 1e9, hi = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 20 + t, k = 2 + t % 9;
    Eigen::MatrixXd p(n, k);
    std::gamma_distribution<double> gam(0.05 + 0.05 * (t % 10));
    for (int i = 0; i < n; ++i) {
      double sum = 0;
      for (int j = 0; j < k; ++j) sum += p(i, j) = gam(rng) + 1e-300;
      p.row(i) /= sum;
    }
    const double is = inception_score(p, 1).mean;
    lo = std::min(lo, is - 1);
    hi = std::max(hi, is / k);
    inside += (is >= 1 - 1e-12 && is <= k + 1e-12) ? 1 : 0;
  }
  v.check(inside == 100, fmt("IS within [1, C] on %d/100 random cases (min IS-1 %.2e, max IS/C %.4f)", inside, lo, hi));
  return v;
}

// --- 3 -----------------------------------------------------------------------

std::vector<double> away_from(std::mt19937_64& rng, int n, double kink) {
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<double> x(n);
  for (auto& e : x) {
    do e = u(rng);
    while (std::abs(e - kink) < 0.05);
  }
  return x;
}

Verdict loss_suite() {
  Verdict v;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12; };
  {
    Tensor<double> t(2, 3, 4, 4, 1.0), s(2, 3, 4, 4, -1.0);
    v.check(pixel_kd_loss(t, t).value == 0.0, "pixel: t = s gives 0");
    v.check(near(pixel_kd_loss(t, s).value, 2.0), "pixel: t = 1, s = -1 gives 2");
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    Tensor<double> x(3, 3, 5, 5), y(3, 3, 5, 5);
    for (auto& e : x.vec()) e = nd(rng);
    for (auto& e : y.vec()) e = nd(rng);
    v.check(std::abs(pixel_kd_loss(x, y).value - oracle::mean_abs_diff(x.vec(), y.vec())) <= 1e-6,
            "pixel: random pair equals the scalar-loop mean");
  }
  {
    const std::vector<double> zero{0, 0}, s13{1, 3};
    const auto l0 = adv_kd_g_loss<double>(zero);
    const auto l13 = adv_kd_g_loss<double>(s13);
    v.check(near(l0.value, 0) && near(l13.value, -2), "adversarial G: [0,0] gives 0, [1,3] gives -2");
    v.check(near(l13.grad_fake[0], -0.5) && near(l13.grad_fake[1], -0.5), "adversarial G: gradient -1/batch");
  }
  {
    auto d = [](double t, double s) {
      const std::vector<double> a{t}, b{s};
      return adv_kd_d_loss<double>(a, b).value;
    };
    auto r = [](double x, double s) {
      const std::vector<double> a{x}, b{s};
      return real_gan_d_loss<double>(a, b).value;
    };
    v.check(near(d(2, -2), 0) && near(d(0, 0), 2) && near(d(-1, 1), 4), "adversarial D: 0, 2, 4 on the three rows");
    v.check(near(r(1, -1), 0) && near(r(-1, 1), 4), "real-data GAN D: 0 and 4");
    std::mt19937_64 rng(5);
    bool same = true;
    for (int t = 0; t < 50; ++t) {
      const auto a = away_from(rng, 4, 1), b = away_from(rng, 4, -1);
      same = same && adv_kd_d_loss<double>(a, b).value == real_gan_d_loss<double>(a, b).value;
    }
    v.check(same, "adversarial D and real-data D are the same function of (real, fake)");
  }
  {
    FeatureStack<double> t{Tensor<double>(2, 3, 2, 2, 0.0), Tensor<double>(2, 4, 1, 1, 0.0)};
    FeatureStack<double> s{Tensor<double>(2, 3, 2, 2, 0.5), Tensor<double>(2, 4, 1, 1, -0.2)};
    const std::vector<double> alpha{1, 2}, zero{0, 0};
    v.check(feature_kd_loss(t, t, alpha).value == 0.0, "feature: identical stacks give 0");
    v.check(feature_kd_loss(t, s, zero).value == 0.0, "feature: zero alpha gives 0");
    v.check(near(feature_kd_loss(t, s, alpha).value, 0.9), "feature: diffs (0.5, 0.2), alpha (1, 2) give 0.9");
  }
  {
    const GeneratorTerms g{0.7, 0.3, -1.2, 0.4};
    const DiscriminatorTerms dd{1.1, 0.6};
    LossWeights w;
    w.lambda1 = w.lambda2 = w.lambda3 = w.lambda4 = 0;
    v.check(full_g_loss(g, w) == g.feat, "all lambda 0: L_S = L_feat");
    w.lambda1 = 1;
    v.check(full_g_loss({0, 0.3, -1.2, 0.4}, w) == 0.3, "lambda1 1, others 0, L_feat 0: L_S = L_pix");
    w = LossWeights{};
    w.lambda1 = 3.5;
    const auto rep = make_report(4, g, dd, w);
    v.check(std::abs(rep.total_g - (0.7 + 3.5 * 0.3 - 1.2 + 0.4)) <= 1e-12 &&
                std::abs(rep.total_d - (1.1 + 0.6)) <= 1e-12,
            "report totals equal the recomputed weighted sums");
  }
  {
    const Lambda1Schedule sch{10.0, 100};
    bool mono = true;
    for (int k = 1; k <= 150; ++k) mono = mono && decay_lambda1(k, sch) <= decay_lambda1(k - 1, sch);
    v.check(decay_lambda1(0, sch) == 10 && decay_lambda1(100, sch) == 0 && near(decay_lambda1(50, sch), 5) && mono,
            "lambda1 decay: 10 at 0, 5 at half, 0 at horizon, non-increasing");
  }

  // Gradients against central differences, 20 random draws per loss.
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd;
  double worst[5] = {0, 0, 0, 0, 0};
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> t(2, 3, 3, 3), s(2, 3, 3, 3);
    for (auto& e : t.vec()) e = nd(rng);
    for (std::size_t i = 0; i < s.size(); ++i) {
      do s[i] = nd(rng);
      while (std::abs(s[i] - t[i]) < 0.01);
    }
    const auto pl = pixel_kd_loss(t, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      worst[0] = std::max(worst[0], oracle::rel_err(pl.grad_student[i], oracle::central_diff([&] {
                                                      return oracle::mean_abs_diff(t.vec(), s.vec());
                                                    }, &s[i])));

    auto sc = away_from(rng, 6, 99);
    const auto gl = adv_kd_g_loss<double>(sc);
    for (std::size_t i = 0; i < sc.size(); ++i)
      worst[1] = std::max(worst[1], oracle::rel_err(gl.grad_fake[i], oracle::central_diff([&] {
                                                      double m = 0;
                                                      for (double e : sc) m += e;
                                                      return -m / static_cast<double>(sc.size());
                                                    }, &sc[i])));

    auto r = away_from(rng, 5, 1), f = away_from(rng, 4, -1);
    int slot = 2;
    for (auto fn : {&adv_kd_d_loss<double>, &real_gan_d_loss<double>}) {
      const auto dl = fn(r, f);
      for (std::size_t i = 0; i < r.size(); ++i)
        worst[slot] = std::max(worst[slot], oracle::rel_err(dl.grad_real[i], oracle::central_diff([&] {
                                                              return oracle::hinge_pair(r, f);
                                                            }, &r[i])));
      for (std::size_t i = 0; i < f.size(); ++i)
        worst[slot] = std::max(worst[slot], oracle::rel_err(dl.grad_fake[i], oracle::central_diff([&] {
                                                              return oracle::hinge_pair(r, f);
                                                            }, &f[i])));
      ++slot;
    }

    FeatureStack<double> ft{Tensor<double>(2, 2, 2, 2), Tensor<double>(2, 3, 1, 1)}, fs = ft;
    for (std::size_t l = 0; l < ft.size(); ++l)
      for (std::size_t i = 0; i < ft[l].size(); ++i) {
        ft[l][i] = nd(rng);
        do fs[l][i] = nd(rng);
        while (std::abs(fs[l][i] - ft[l][i]) < 0.01);
      }
    const std::vector<double> alpha{0.3, 0.7};
    const auto fl = feature_kd_loss(ft, fs, alpha);
    for (std::size_t l = 0; l < fs.size(); ++l)
      for (std::size_t i = 0; i < fs[l].size(); ++i)
        worst[4] = std::max(worst[4], oracle::rel_err(fl.grad_student[l][i], oracle::central_diff([&] {
                                                        return alpha[0] * oracle::mean_abs_diff(ft[0].vec(), fs[0].vec()) +
                                                               alpha[1] * oracle::mean_abs_diff(ft[1].vec(), fs[1].vec());
                                                      }, &fs[l][i])));
  }
  const char* names[5] = {"pixel", "adversarial G", "adversarial D", "real-data D", "feature"};
  for (int i = 0; i < 5; ++i)
    v.check(worst[i] <= 1e-3, fmt("%s gradient vs central differences, 20 draws: max rel error %.2e", names[i], worst[i]));
  return v;
}

// --- 4 -----------------------------------------------------------------------

Verdict spectral_bound() {
  Verdict v;
  DiscriminatorSpec spec;  // desk scale: Ch 16, three strided layers, 10 classes, 32 px
  double worst = 0, lowest = 1e9, cold_worst = 0;
  int layers = 0;
  for (int s = 0; s < 50; ++s) {
    auto sigmas = [&](Discriminator<double>& d) {
      std::vector<double> out;
      for (const auto* sn : d.spectral_layers()) {
        const auto& w = sn->normalized();
        Eigen::Map<const RowMat> m(w.data(), w.n(), static_cast<Eigen::Index>(w.size() / w.n()));
        out.push_back(oracle::sigma_max(m));
      }
      return out;
    };
    Discriminator<double> d(spec, derive_seed(404, {static_cast<std::uint64_t>(s)}));
    Discriminator<double> cold = d;
    d.refresh_spectral(5, 1e-9);
    for (double x : sigmas(d)) {
      worst = std::max(worst, x);
      lowest = std::min(lowest, x);
      ++layers;
    }
    cold.refresh_spectral(5);
    for (double x : sigmas(cold)) cold_worst = std::max(cold_worst, x);
  }
  v.check(worst <= 1 + 1e-3, fmt("50 draws x %d layers, >= 5 power iterations run to a 1e-9 relative settle: "
                                 "max sigma %.6f (min %.6f)",
                                 layers / 50, worst, lowest));
  v.note(fmt("for reference, exactly 5 cold-start iterations leave max sigma at %.4f", cold_worst));
  v.record["max_sigma"] = worst;
  v.record["cold5_max_sigma"] = cold_worst;
  return v;
}

// --- desk-scale task shared by 5, 6 and 9 --------------------------------------

struct Desk {
  fs::path root;
  std::unique_ptr<DistillDataset> pairs, real;
  std::unique_ptr<ConvClassifier> clf;
  ClassifierReport clf_report;
  GaussianStats pair_stats;

  explicit Desk(const fs::path& dir) : root(dir) {
    auto teacher = make_synthetic_teacher(10, 32, 1);
    const auto before = TeacherOracle::invocation_count();
    pairs = std::make_unique<DistillDataset>(synthesize_dataset(*teacher, 1000, 11, root / "pairs",
                                                                {.z_dim = 128, .source = "synthetic"}));
    real = std::make_unique<DistillDataset>(synthesize_dataset(
        *teacher, 1000, 12, root / "real",
        {.z_dim = 128, .truncation = std::numeric_limits<double>::infinity(), .source = "real:synthetic"}));
    std::printf("  desk task: %lld pairs + %lld real images, %lld teacher calls\n",
                static_cast<long long>(pairs->size()), static_cast<long long>(real->size()),
                static_cast<long long>(TeacherOracle::invocation_count() - before));
    clf = std::make_unique<ConvClassifier>(10, 32, 16, 3);
    clf_report = train_classifier(*clf, *real, {.steps = 1000});
    std::printf("  feature extractor held-out accuracy %.4f\n", clf_report.heldout_accuracy);
    if (clf_report.heldout_accuracy < kMinClassifierAccuracy)
      throw DataError("feature extractor accuracy below 0.95; FID would not be meaningful");
    pair_stats = reference_stats(*pairs, *clf);
    std::fflush(stdout);
  }

  TrainConfig train_config(std::int64_t steps, std::uint64_t seed) const {
    TrainConfig c;
    c.total_g_steps = steps;
    c.seed = seed;
    c.eval_every = std::max<std::int64_t>(1, steps / 6);
    c.eval_samples = 1000;
    return c;
  }
};

bool finite_trace(const TrainState& st) {
  for (const auto& l : st.losses)
    if (!std::isfinite(l.total_g) || !std::isfinite(l.total_d)) return false;
  for (const auto& e : st.evals)
    if (!std::isfinite(e.fid)) return false;
  return true;
}

std::string trace_string(const TrainState& st) {
  std::string s;
  for (const auto& e : st.evals) s += fmt("%lld:%.1f ", static_cast<long long>(e.step), e.fid);
  return s;
}

// --- 5 -----------------------------------------------------------------------

Verdict stability(Desk& desk, std::int64_t steps, std::int64_t scratch_steps) {
  Verdict v;
  EvalSetup ev{desk.clf.get(), desk.pair_stats};
  json seeds = json::array();
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto t0 = std::chrono::steady_clock::now();
    Generator<float> g(GeneratorSpec{}, seed);
    Discriminator<float> d(DiscriminatorSpec{}, derive_seed(seed, {0xd}));
    const fs::path dir = desk.root / ("stability_seed" + std::to_string(seed));
    const TrainState st = train_distill(*desk.pairs, desk.real.get(), g, d, desk.train_config(steps, seed), &ev, dir);
    save_generator(dir / "generator.gdc", g);
    const double first = st.evals.front().fid, last = st.evals.back().fid;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.check(finite_trace(st) && !st.collapsed, fmt("seed %llu: finite losses and FIDs over %lld steps (%.0f s)",
                                                   static_cast<unsigned long long>(seed),
                                                   static_cast<long long>(st.g_step), secs));
    v.check(last <= 0.5 * first, fmt("seed %llu: final FID %.2f <= 0.5 x initial %.2f (ratio %.4f)",
                                     static_cast<unsigned long long>(seed), last, first, last / first));
    v.note("trace " + trace_string(st));
    json evals = json::array();
    for (const auto& e : st.evals) evals.push_back(to_json(e));
    seeds.push_back({{"seed", seed}, {"evals", evals}});
    std::fflush(stdout);
  }
  v.record["distill"] = seeds;

  // From-scratch GAN on the real images with the same architecture and budget:
  // recorded for comparison only.
  Generator<float> g(GeneratorSpec{}, 1);
  Discriminator<float> d(DiscriminatorSpec{}, derive_seed(1, {0xd}));
  const TrainState st =
      train_teacher_gan(*desk.real, g, d, desk.train_config(scratch_steps, 1), &ev, desk.root / "from_scratch");
  v.note(fmt("from-scratch GAN (no pass/fail), %lld steps%s: ", static_cast<long long>(st.g_step),
             st.collapsed ? (", collapsed: " + st.stop_reason).c_str() : "") +
         trace_string(st));
  json evals = json::array();
  for (const auto& e : st.evals) evals.push_back(to_json(e));
  v.record["from_scratch"] = {{"evals", evals}, {"collapsed", st.collapsed}};
  return v;
}

// --- 6 -----------------------------------------------------------------------

Verdict ablation(Desk& desk, std::int64_t steps) {
  Verdict v;
  AblationSetup s;
  s.pairs = desk.pairs.get();
  s.real = desk.real.get();
  s.train = desk.train_config(steps, 1);
  s.init_seed = 1;
  s.extractor = desk.clf.get();
  s.run_root = desk.root / "ablation";
  s.intra_fid_per_class = 100;
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_ablation(standard_arms(), s);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::map<std::string, const AblationRow*> by;
  json table = json::array();
  v.note(fmt("%-9s %10s %10s %10s  (%lld steps per arm, %.0f s total)", "arm", "FID", "intra-FID", "HF energy",
             static_cast<long long>(steps), secs));
  for (const auto& r : rows) {
    by[r.arm] = &r;
    table.push_back(to_json(r));
    v.note(fmt("%-9s %10.2f %10.2f %10.5f%s", r.arm.c_str(), r.fid, r.intra_fid, r.hf_energy,
               r.collapsed ? "  collapsed" : ""));
  }
  v.record["arms"] = table;
  bool same_init = true;
  for (const auto& r : rows) same_init = same_init && r.initial_state_hash == rows.front().initial_state_hash;
  v.check(same_init, fmt("all arms start from the same state (hash %08x)", rows.front().initial_state_hash));
  const AblationRow& full = *by.at("full");
  for (const char* other : {"pix-only", "-feat"}) {
    const AblationRow& o = *by.at(other);
    v.check(full.fid <= 0.8 * o.fid,
            fmt("FID(full) %.2f <= 0.8 x FID(%s) %.2f (ratio %.3f)", full.fid, other, o.fid, full.fid / o.fid));
  }
  const AblationRow& pix = *by.at("pix-only");
  v.check(pix.hf_energy <= 0.6 * full.hf_energy, fmt("HF energy pix-only %.5f <= 0.6 x full %.5f (ratio %.3f)",
                                                     pix.hf_energy, full.hf_energy, pix.hf_energy / full.hf_energy));
  return v;
}

// --- 7 -----------------------------------------------------------------------

Verdict teacher_free(const fs::path& root) {
  Verdict v;
  auto teacher = make_synthetic_teacher(4, 16, 2);
  const auto c0 = TeacherOracle::invocation_count();
  synthesize_dataset(*teacher, 40, 1, root / "pairs", {.z_dim = 16});
  const auto c1 = TeacherOracle::invocation_count();
  v.check(c1 - c0 == 160, fmt("synthesis of 4 x 40 pairs: %lld oracle calls", static_cast<long long>(c1 - c0)));

  // The CLI distill path end to end (in-process, so the counter is shared).
  const std::string data = (root / "pairs").string(), run = (root / "run").string();
  std::vector<std::string> args{"gandistill", "distill", "--data", data, "--out", run, "--arm", "-gan",
                                "--steps", "5", "--batch-size", "8", "--set", "d_steps_per_g=2",
                                "--set", "g_channel_multiplier=2", "--set", "d_channel_multiplier=4",
                                "--set", "g_embedding_dim=8", "--set", "eval_every=0"};
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  const auto c2 = TeacherOracle::invocation_count();
  v.check(code == 0 && c2 == c1, fmt("`distill` (5 G-steps, exit %d): %lld oracle calls", code,
                                     static_cast<long long>(c2 - c1)));

  auto real = synthesize_dataset(*teacher, 20, 9, root / "real", {.z_dim = 16, .truncation = 1e9});
  const auto pairs = DistillDataset::open(root / "pairs");
  const auto c3 = TeacherOracle::invocation_count();
  GeneratorSpec gs;
  gs.z_dim = 16;
  gs.num_classes = 4;
  gs.embedding_dim = 8;
  gs.channel_multiplier = 2;
  gs.num_res_blocks = 2;
  gs.output_resolution = 16;
  DiscriminatorSpec ds;
  ds.channel_multiplier = 4;
  ds.num_classes = 4;
  ds.input_resolution = 16;
  Generator<float> g(gs, 1);
  Discriminator<float> d(ds, 2);
  TrainConfig tc;
  tc.total_g_steps = 5;
  tc.d_steps_per_g = 2;
  tc.batch_size = 8;
  tc.eval_every = 0;
  train_distill(pairs, &real, g, d, tc);
  v.check(TeacherOracle::invocation_count() == c3,
          fmt("full objective with real data, 5 G-steps: %lld oracle calls",
              static_cast<long long>(TeacherOracle::invocation_count() - c3)));
  return v;
}

// --- 8 -----------------------------------------------------------------------

Verdict determinism(const fs::path& root) {
  Verdict v;
  auto teacher = make_synthetic_teacher(4, 16, 3);
  const auto pairs = synthesize_dataset(*teacher, 30, 1, root / "pairs", {.z_dim = 16});
  const auto real = synthesize_dataset(*teacher, 30, 2, root / "real", {.z_dim = 16, .truncation = 1e9});
  ProjectionExtractor fe(16, 12, 4, 5);
  const EvalSetup ev{&fe, reference_stats(pairs, fe)};

  GeneratorSpec gs;
  gs.z_dim = 16;
  gs.num_classes = 4;
  gs.embedding_dim = 8;
  gs.channel_multiplier = 3;
  gs.num_res_blocks = 2;
  gs.output_resolution = 16;
  DiscriminatorSpec ds;
  ds.channel_multiplier = 4;
  ds.num_classes = 4;
  ds.input_resolution = 16;
  TrainConfig tc;
  tc.total_g_steps = 12;
  tc.d_steps_per_g = 3;
  tc.batch_size = 16;
  tc.eval_every = 3;
  tc.eval_samples = 40;
  tc.is_splits = 2;
  tc.seed = 5;

  auto straight = [&](const fs::path& dir) {
    Generator<float> g(gs, 1);
    Discriminator<float> d(ds, 2);
    Trainer t(tc, g, &d, &pairs, &real, &ev);
    t.set_run_dir(dir);
    t.run();
    t.save_checkpoint(dir / "final.gdc");
  };
  straight(root / "a");
  straight(root / "b");
  const std::string log_a = read_file(root / "a" / "metrics.jsonl");
  v.check(log_a == read_file(root / "b" / "metrics.jsonl") && !log_a.empty(),
          "identical configs: metrics.jsonl byte-identical");
  v.check(read_file(root / "a" / "final.gdc") == read_file(root / "b" / "final.gdc"),
          "identical configs: final checkpoints byte-identical");

  std::mt19937_64 rng(2024);
  std::set<std::int64_t> ks{1, 7};
  ks.insert(std::uniform_int_distribution<std::int64_t>(2, 11)(rng));
  for (std::int64_t k : ks) {
    const fs::path dir = root / ("resume" + std::to_string(k));
    {
      Generator<float> g(gs, 1);
      Discriminator<float> d(ds, 2);
      Trainer t(tc, g, &d, &pairs, &real, &ev);
      t.set_run_dir(dir);
      t.run(k);
      t.save_checkpoint(dir / "mid.gdc");
    }
    Generator<float> g(gs, 99);
    Discriminator<float> d(ds, 98);
    Trainer t(tc, g, &d, &pairs, &real, &ev);
    t.load_checkpoint(dir / "mid.gdc");
    t.set_run_dir(dir);
    t.run();
    t.save_checkpoint(dir / "final.gdc");
    const bool same_state = read_file(dir / "final.gdc") == read_file(root / "a" / "final.gdc");
    const bool same_log = read_file(dir / "metrics.jsonl") == log_a;
    v.check(same_state && same_log, fmt("save at step %lld, resume in fresh models: final state %s, metric log %s",
                                        static_cast<long long>(k), same_state ? "identical" : "DIFFERS",
                                        same_log ? "identical" : "DIFFERS"));
  }
  return v;
}

// --- 9 -----------------------------------------------------------------------

Verdict interpolation(const fs::path& trained) {
  Verdict v;
  GeneratorSpec spec;
  spec.num_classes = 10;
  Generator<float> g(spec, 17);
  // A few train-mode passes so the running statistics are not the defaults.
  for (int i = 0; i < 3; ++i) {
    const auto b = make_batch(derive_seed(8, {std::uint64_t(i)}), 32, spec.z_dim, 2.0, spec.num_classes);
    g.forward(latents_to_tensor<float>(b), labels_of(b), Mode::kTrain);
  }
  auto direct = [&](Generator<float>& gen, const LatentVector& z, int y) {
    Tensor<float> zt(1, gen.spec().z_dim);
    std::copy(z.values.begin(), z.values.end(), zt.data());
    return gen.forward(zt, std::vector<int>{y}, Mode::kEval);
  };
  auto frame_equals = [](const InterpolationResult& r, int i, const Tensor<float>& img) {
    return std::equal(img.vec().begin(), img.vec().end(), r.images.sample(i));
  };

  int exact = 0, total = 0;
  bool lin = true, mono = true;
  for (int trial = 0; trial < 10; ++trial) {
    InterpolationSpec is;
    is.z1 = sample_truncated_normal(derive_seed(50, {std::uint64_t(trial), 1}), spec.z_dim, 2.0);
    is.z2 = sample_truncated_normal(derive_seed(50, {std::uint64_t(trial), 2}), spec.z_dim, 2.0);
    is.y1 = {trial % 10};
    is.y2 = {(trial * 3 + 1) % 10};
    is.num_steps = 9;
    for (auto mode : {InterpolationMode::kLatent, InterpolationMode::kClassEmbedding}) {
      is.mode = mode;
      const auto r = interpolate(g, is);
      const bool zm = mode == InterpolationMode::kLatent;
      exact += frame_equals(r, 0, direct(g, is.z1, is.y1.index)) ? 1 : 0;
      exact += frame_equals(r, 8, direct(g, zm ? is.z2 : is.z1, zm ? is.y1.index : is.y2.index)) ? 1 : 0;
      total += 2;
      if (zm) continue;
      const auto e = g.embed(std::vector<int>{is.y1.index, is.y2.index});
      double prev = -1;
      for (int i = 0; i < is.num_steps; ++i) {
        const float a = static_cast<float>(1.0 - r.t[i]), b = static_cast<float>(r.t[i]);
        double num = 0, den = 0;
        for (int k = 0; k < spec.embedding_dim; ++k) {
          lin = lin && r.embeddings.at(i, k) == a * e.at(0, k) + b * e.at(1, k);
          const double dk = double(e.at(1, k)) - e.at(0, k);
          num += (double(r.embeddings.at(i, k)) - e.at(0, k)) * dk;
          den += dk * dk;
        }
        mono = mono && num / den > prev;
        prev = num / den;
      }
    }
  }
  v.check(exact == total, fmt("t = 0 and t = 1 frames bit-equal direct eval-mode generation: %d/%d", exact, total));
  v.check(lin, "class-embedding path equals (1-t) E(y1) + t E(y2) exactly at every frame");
  v.check(mono, "projection onto E(y2) - E(y1) strictly increases along the path");

  if (fs::exists(trained)) {
    auto tg = load_generator(trained);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
      InterpolationSpec is;
      is.z1 = sample_truncated_normal(derive_seed(60, {std::uint64_t(trial), 1}), tg->spec().z_dim, 2.0);
      is.z2 = sample_truncated_normal(derive_seed(60, {std::uint64_t(trial), 2}), tg->spec().z_dim, 2.0);
      is.y1 = is.y2 = {trial % tg->spec().num_classes};
      is.num_steps = 16;
      const auto r = interpolate(*tg, is);
      std::vector<double> steps;
      for (int i = 1; i < is.num_steps; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < r.images.sample_size(); ++k)
          s += std::abs(r.images.sample(i)[k] - r.images.sample(i - 1)[k]);
        steps.push_back(s / static_cast<double>(r.images.sample_size()));
      }
      auto sorted = steps;
      std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
      worst = std::max(worst, *std::max_element(steps.begin(), steps.end()) / sorted[sorted.size() / 2]);
    }
    v.note(fmt("trained desk model, latent paths: worst max/median adjacent-frame L1 step %.2f (budget 3)", worst));
    v.record["smoothness_worst_ratio"] = worst;
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-9"};
  std::string only, work;
  std::int64_t stability_steps = 600, scratch_steps = 600, ablation_steps = 3000;
  app.add_option("--only", only, "Comma list of criteria to run (default: all)");
  app.add_option("--work", work, "Working directory (default: a fresh temp dir)");
  app.add_option("--stability-steps", stability_steps, "Generator steps per distillation seed (criterion 5)");
  app.add_option("--scratch-steps", scratch_steps, "Generator steps of the from-scratch trace (criterion 5)");
  app.add_option("--ablation-steps", ablation_steps, "Generator steps per ablation arm (criterion 6)");
  CLI11_PARSE(app, argc, argv);

  std::set<int> wanted;
  {
    std::stringstream ss(only);
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) wanted.insert(std::stoi(item));
    if (wanted.empty()) wanted = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  }
  const fs::path root = work.empty() ? fs::temp_directory_path() / ("gandistill_acceptance_" + std::to_string(::getpid()))
                                     : fs::path(work);
  fs::create_directories(root);

  std::unique_ptr<Desk> desk;
  auto need_desk = [&]() -> Desk& {
    if (!desk) desk = std::make_unique<Desk>(root / "desk");
    return *desk;
  };

  const std::map<int, std::pair<std::string, std::function<Verdict()>>> criteria{
      {1, {"parameter accounting", parameter_accounting}},
      {2, {"metric oracles", metric_oracles}},
      {3, {"loss unit suite", loss_suite}},
      {4, {"spectral bound", spectral_bound}},
      {5, {"stability (3 seeds)", [&] { return stability(need_desk(), stability_steps, scratch_steps); }}},
      {6, {"ablation ordering", [&] { return ablation(need_desk(), ablation_steps); }}},
      {7, {"teacher-free training", [&] { return teacher_free(root / "c7"); }}},
      {8, {"determinism and checkpointing", [&] { return determinism(root / "c8"); }}},
      {9, {"interpolation endpoints",
           [&] { return interpolation(root / "desk" / "stability_seed1" / "generator.gdc"); }}},
  };

  json report = json::object();
  int failed = 0;
  for (const auto& [id, entry] : criteria) {
    if (!wanted.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = entry.second();
    } catch (const std::exception& e) {
      v.check(false, std::string("threw: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s  %s (%.1f s)\n", id, v.pass ? "PASS" : "FAIL", entry.first.c_str(), secs);
    for (const auto& l : v.lines) std::printf("    %s\n", l.c_str());
    std::fflush(stdout);
    v.record["pass"] = v.pass;
    v.record["seconds"] = secs;
    report[std::to_string(id)] = v.record;
    failed += v.pass ? 0 : 1;
  }
  write_file_atomic(root / "acceptance_report.json", report.dump(2) + "\n");
  std::printf("%d criteria failed; report in %s\n", failed, (root / "acceptance_report.json").string().c_str());
  return failed == 0 ? 0 : 1;
}
