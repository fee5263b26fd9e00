#pragma once

// Independent reference computations used only by tests. Each one follows the
// literal mathematical definition and shares no code path with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <vector>

namespace oracle {

using cd = std::complex<double>;

// Literal sum X_k = sum_t x_t exp(-2 pi i k t / n) with the angle evaluated directly.
inline std::vector<cd> dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<cd> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t t = 0; t < n; ++t)
      out[k] += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k) * double(t) / double(n));
  return out;
}

inline std::vector<cd> idft(std::span<const cd> X) {
  const std::size_t n = X.size();
  std::vector<cd> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t k = 0; k < n; ++k)
      out[t] += X[k] * std::polar(1.0, 2.0 * std::numbers::pi * double(k) * double(t) / double(n));
    out[t] /= double(n);
  }
  return out;
}

// Time-domain route: mask the spectrum, invert, take the l2 norm.
// band: 0 = high, 1 = low, 2 = full.
inline double masked_time_energy(std::span<const double> x, double cutoff, int band) {
  const std::size_t n = x.size();
  if (n == 0) return 0.0;
  auto X = dft(x);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = double(std::min(k, n - k)) / double(n);
    const bool high = k != 0 && f >= cutoff;
    const bool keep = band == 2 || (band == 0 ? high : !high);
    if (!keep) X[k] = 0.0;
  }
  const auto z = idft(X);
  double s = 0.0;
  for (const auto& v : z) s += std::norm(v);
  return std::sqrt(s);
}

inline double l2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

// Zero-padded full convolution (numpy.convolve 'full'), then keep odd indices.
inline std::vector<double> conv_full_downsample_odd(std::span<const double> x, std::span<const double> f) {
  const std::size_t n = x.size(), m = f.size();
  std::vector<double> padded(n + 2 * (m - 1), 0.0);
  std::copy(x.begin(), x.end(), padded.begin() + static_cast<std::ptrdiff_t>(m - 1));
  std::vector<double> full(n + m - 1, 0.0);
  for (std::size_t i = 0; i < full.size(); ++i)
    for (std::size_t j = 0; j < m; ++j) full[i] += f[j] * padded[i + (m - 1) - j];
  std::vector<double> out;
  for (std::size_t i = 1; i < full.size(); i += 2) out.push_back(full[i]);
  return out;
}

// Pairwise AUROC: count of positive-over-negative wins plus half the ties.
inline double auroc_pairs(std::span<const double> s, std::span<const int> y) {
  double wins2 = 0.0;
  std::size_t np = 0, nn = 0;
  for (int v : y) (v ? np : nn)++;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      if (s[i] > s[j]) wins2 += 2.0;
      else if (s[i] == s[j]) wins2 += 1.0;
    }
  }
  return (wins2 / 2.0) / double(np * nn);
}

inline double f1_loop(std::span<const double> s, std::span<const int> y, double thr) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool p = s[i] >= thr;
    if (p && y[i]) tp++;
    else if (p) fp++;
    else if (y[i]) fn++;
  }
  const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  return prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
}

// Best F1 over every midpoint of distinct sorted scores and 0.5.
inline double best_f1_exhaustive(std::span<const double> s, std::span<const int> y) {
  std::vector<double> v(s.begin(), s.end());
  std::sort(v.begin(), v.end());
  double best = f1_loop(s, y, 0.5);
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    if (v[i] != v[i + 1]) best = std::max(best, f1_loop(s, y, (v[i] + v[i + 1]) / 2.0));
  return best;
}

// Regularized logistic objective on standardized inputs, evaluated row by row.
inline double logistic_objective(const std::vector<std::vector<double>>& z, const std::vector<int>& y,
                                 const std::vector<double>& w, double b, double lambda) {
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double m = b;
    for (std::size_t j = 0; j < w.size(); ++j) m += w[j] * z[i][j];
    loss += std::log1p(std::exp(-std::abs(m))) + std::max(m, 0.0) - y[i] * m;
  }
  double reg = 0.0;
  for (double v : w) reg += v * v;
  return loss / double(z.size()) + 0.5 * lambda * reg;
}

// Plain fixed-step gradient descent on the same objective, run long.
inline double gradient_descent_min(const std::vector<std::vector<double>>& z, const std::vector<int>& y, double lambda,
                                   int iters, double lr) {
  const std::size_t d = z[0].size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < iters; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      double m = b;
      for (std::size_t j = 0; j < d; ++j) m += w[j] * z[i][j];
      const double r = 1.0 / (1.0 + std::exp(-m)) - y[i];
      for (std::size_t j = 0; j < d; ++j) gw[j] += r * z[i][j];
      gb += r;
    }
    for (std::size_t j = 0; j < d; ++j) w[j] -= lr * (gw[j] / double(z.size()) + lambda * w[j]);
    b -= lr * gb / double(z.size());
  }
  return logistic_objective(z, y, w, b, lambda);
}

inline std::vector<double> random_signal(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

}  // namespace oracle
