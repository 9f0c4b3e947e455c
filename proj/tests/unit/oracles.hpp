#pragma once
// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's metric, loss or sampling code.

#include <span>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

/// Central difference of f around *x with step h; restores *x.
inline double central_diff(const std::function<double()>& f, double* x, double h = 1e-6) {
  const double x0 = *x;
  *x = x0 + h;
  const double fp = f();
  *x = x0 - h;
  const double fm = f();
  *x = x0;
  return (fp - fm) / (2 * h);
}

inline double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double hinge_pair(const std::vector<double>& real, const std::vector<double>& fake) {
  double r = 0, f = 0;
  for (double v : real) r += std::max(0.0, 1 - v);
  for (double v : fake) f += std::max(0.0, 1 + v);
  return r / real.size() + f / fake.size();
}

/// exp(mean KL(p(y|x) || p(y))) over one split, with explicit loops.
inline double inception_score_loop(const std::vector<std::vector<double>>& p) {
  const std::size_t n = p.size(), c = p[0].size();
  std::vector<double> marg(c, 0.0);
  for (const auto& row : p)
    for (std::size_t j = 0; j < c; ++j) marg[j] += row[j] / n;
  double kl = 0;
  for (const auto& row : p)
    for (std::size_t j = 0; j < c; ++j)
      if (row[j] > 0) kl += row[j] * (std::log(row[j]) - std::log(marg[j]));
  return std::exp(kl / n);
}

/// Frechet distance for diagonal covariances: sum (sqrt(l_i) - sqrt(n_i))^2 + |dmu|^2.
inline double frechet_diagonal(const std::vector<double>& mu_a, const std::vector<double>& var_a,
                               const std::vector<double>& mu_b, const std::vector<double>& var_b) {
  double d = 0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    d += (mu_a[i] - mu_b[i]) * (mu_a[i] - mu_b[i]);
    d += (std::sqrt(var_a[i]) - std::sqrt(var_b[i])) * (std::sqrt(var_a[i]) - std::sqrt(var_b[i]));
  }
  return d;
}

/// Largest singular value by a full SVD.
inline double sigma_max(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  return svd.singularValues()(0);
}

/// Standard normal CDF.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// CDF of N(0,1) truncated to [-t, t].
inline double truncated_normal_cdf(double x, double t) {
  if (x <= -t) return 0;
  if (x >= t) return 1;
  return (phi(x) - phi(-t)) / (phi(t) - phi(-t));
}

/// Second moment of N(0,1) truncated to [-t, t] by Simpson integration.
inline double truncated_normal_second_moment(double t, int intervals = 20000) {
  const double h = 2 * t / intervals;
  auto pdf = [](double x) { return std::exp(-0.5 * x * x); };
  double num = 0, den = 0;
  for (int i = 0; i <= intervals; ++i) {
    const double x = -t + i * h;
    const double w = (i == 0 || i == intervals) ? 1 : (i % 2 ? 4 : 2);
    num += w * x * x * pdf(x);
    den += w * pdf(x);
  }
  return num / den;
}

/// Pearson correlation by the textbook formula.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

/// Generator weight count for the residual layout by direct enumeration of
/// every tensor (used to cross-check the model's own parameter list).
struct GeneratorCount {
  int z_dim, num_classes, emb, ch, blocks;
  bool dw;

  // k x k "same" conv with bias; the separable form has a bias on both parts.
  long long spatial(int in, int out, int k) const {
    return dw ? 1LL * in * k * k + in + 1LL * in * out + out : 1LL * in * out * k * k + out;
  }
  long long cbn(int c) const { return 2LL * (emb * c + c); }  // gain and bias maps with bias
  long long total() const {
    std::vector<int> w{ch << (blocks - 1)};
    for (int i = 0; i < blocks; ++i) w.push_back(ch << (blocks - 1 - i));
    long long n = 1LL * num_classes * emb;             // shared embedding
    n += 1LL * z_dim * w[0] * 16 + 1LL * w[0] * 16;    // input linear + bias
    for (int b = 0; b < blocks; ++b) {
      const int in = w[b], out = w[b + 1];
      n += cbn(in) + cbn(out);
      n += spatial(in, out, 3) + spatial(out, out, 3);
      n += 1LL * in * out + out;     // 1x1 shortcut + bias
    }
    n += 2LL * w.back();                  // final BN affine
    n += spatial(w.back(), 3, 3);
    return n;
  }
};

}  // namespace oracle
