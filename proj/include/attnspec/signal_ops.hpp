#pragma once

// Spectral operators over one-dimensional attention signals.
//
// Every operator maps a finite real signal to a nonnegative "high-frequency
// energy". Signals that are too short for an operator (empty, a single sample
// for the Fourier high band, fewer than three samples for the interior
// Laplacian) map to 0.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "attnspec/error.hpp"

namespace attnspec {

enum class Operator { FourierHigh, FourierLow, FourierFull, WaveletHigh, Laplacian, Entropy, Variance };
enum class Band { High, Low, Full };
enum class WaveletPadding { Zero, Symmetric, Periodic };
enum class LaplacianBoundary { Interior, Circular };

struct SpectralConfig {
  Operator op = Operator::FourierHigh;
  double fourier_cutoff = 0.45;  // normalized frequency, [0, 0.5]
  WaveletPadding wavelet_padding = WaveletPadding::Zero;
  int wavelet_levels = 1;
  LaplacianBoundary laplacian_boundary = LaplacianBoundary::Interior;

  void validate() const {
    if (!(fourier_cutoff >= 0.0 && fourier_cutoff <= 0.5)) {
      throw ConfigError("fourier cutoff must lie in [0, 0.5], got " + std::to_string(fourier_cutoff));
    }
    if (wavelet_levels < 1) {
      throw ConfigError("wavelet levels must be >= 1, got " + std::to_string(wavelet_levels));
    }
  }

  friend bool operator==(const SpectralConfig&, const SpectralConfig&) = default;
};

inline std::string to_string(Operator op) {
  switch (op) {
    case Operator::FourierHigh: return "fourier-high";
    case Operator::FourierLow: return "fourier-low";
    case Operator::FourierFull: return "fourier-full";
    case Operator::WaveletHigh: return "wavelet-high";
    case Operator::Laplacian: return "laplacian";
    case Operator::Entropy: return "entropy";
    case Operator::Variance: return "variance";
  }
  return "?";
}

inline std::string to_string(WaveletPadding p) {
  switch (p) {
    case WaveletPadding::Zero: return "zero";
    case WaveletPadding::Symmetric: return "symmetric";
    case WaveletPadding::Periodic: return "periodic";
  }
  return "?";
}

inline std::string to_string(LaplacianBoundary b) {
  return b == LaplacianBoundary::Interior ? "interior" : "circular";
}

inline Operator parse_operator(std::string_view s) {
  // "fourier" alone means the high band.
  if (s == "fourier" || s == "fourier-high") return Operator::FourierHigh;
  if (s == "fourier-low") return Operator::FourierLow;
  if (s == "fourier-full") return Operator::FourierFull;
  if (s == "wavelet" || s == "wavelet-high") return Operator::WaveletHigh;
  if (s == "laplacian") return Operator::Laplacian;
  if (s == "entropy") return Operator::Entropy;
  if (s == "variance") return Operator::Variance;
  throw ConfigError("unknown operator '" + std::string(s) + "'");
}

inline WaveletPadding parse_padding(std::string_view s) {
  if (s == "zero") return WaveletPadding::Zero;
  if (s == "symmetric") return WaveletPadding::Symmetric;
  if (s == "periodic") return WaveletPadding::Periodic;
  throw ConfigError("unknown wavelet padding '" + std::string(s) + "'");
}

inline LaplacianBoundary parse_boundary(std::string_view s) {
  if (s == "interior") return LaplacianBoundary::Interior;
  if (s == "circular") return LaplacianBoundary::Circular;
  throw ConfigError("unknown laplacian boundary '" + std::string(s) + "'");
}

namespace signal {

using Spectrum = std::vector<std::complex<double>>;

namespace detail {

// exp(-2*pi*i*m/n) for m = 0..n-1; products k*t are reduced mod n before lookup
// so the table is exact to one rounding per entry.
inline Spectrum twiddles(std::size_t n, double sign) {
  Spectrum w(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
    w[m] = {std::cos(angle), std::sin(angle)};
  }
  return w;
}

}  // namespace detail

/// Unnormalized forward DFT: X_k = sum_t x_t exp(-i 2 pi k t / n).
/// Direct O(n^2) summation; attention signals are at most a few thousand samples.
inline Spectrum dft(std::span<const double> x) {
  const std::size_t n = x.size();
  Spectrum out(n);
  if (n == 0) return out;
  const Spectrum w = detail::twiddles(n, -1.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc{0.0, 0.0};
    std::size_t idx = 0;
    for (std::size_t t = 0; t < n; ++t) {
      acc += x[t] * w[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out[k] = acc;
  }
  return out;
}

/// Inverse DFT with the 1/n factor, so inverse_dft(dft(x)) == x.
inline Spectrum inverse_dft(std::span<const std::complex<double>> spectrum) {
  const std::size_t n = spectrum.size();
  Spectrum out(n);
  if (n == 0) return out;
  const Spectrum w = detail::twiddles(n, 1.0);
  for (std::size_t t = 0; t < n; ++t) {
    std::complex<double> acc{0.0, 0.0};
    std::size_t idx = 0;
    for (std::size_t k = 0; k < n; ++k) {
      acc += spectrum[k] * w[idx];
      idx += t;
      if (idx >= n) idx -= n;
    }
    out[t] = acc / static_cast<double>(n);
  }
  return out;
}

/// min(k, n-k)/n, in [0, 0.5].
inline double normalized_frequency(std::size_t k, std::size_t n) {
  return static_cast<double>(std::min(k, n - k)) / static_cast<double>(n);
}

/// Band membership of DFT bin k. The high band is {k != 0 : normfreq(k) >= cutoff};
/// the low band is its complement and always contains DC.
inline bool in_band(std::size_t k, std::size_t n, double cutoff, Band band) {
  const bool high = k != 0 && normalized_frequency(k, n) >= cutoff;
  switch (band) {
    case Band::High: return high;
    case Band::Low: return !high;
    case Band::Full: return true;
  }
  return false;
}

inline void check_cutoff(double cutoff) {
  if (!(cutoff >= 0.0 && cutoff <= 0.5)) {
    throw ConfigError("fourier cutoff must lie in [0, 0.5], got " + std::to_string(cutoff));
  }
}

/// sqrt((1/n) * sum_{k in band} |X_k|^2), the time-domain l2 norm of the
/// band-limited component by Parseval.
inline double fourier_band_energy(std::span<const double> x, double cutoff, Band band) {
  check_cutoff(cutoff);
  const std::size_t n = x.size();
  if (n == 0) return 0.0;
  const Spectrum spectrum = dft(x);
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (in_band(k, n, cutoff, band)) sum += std::norm(spectrum[k]);
  }
  return std::sqrt(sum / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Daubechies-4 (8 taps, four vanishing moments)

struct Db4 {
  // Analysis low-pass filter in convolution order (identical to PyWavelets' db4 dec_lo).
  static constexpr std::array<double, 8> lowpass = {
      -0.010597401785069032, 0.0328830116668852,  0.030841381835560764, -0.18703481171909309,
      -0.027983769416859854, 0.6308807679298589,  0.7148465705529157,   0.2303778133088965,
  };

  // g_k = (-1)^k h_{7-k}
  static constexpr std::array<double, 8> highpass = [] {
    std::array<double, 8> g{};
    for (std::size_t k = 0; k < 8; ++k) g[k] = (k % 2 == 0 ? 1.0 : -1.0) * lowpass[7 - k];
    return g;
  }();
};

/// Largest residual over the filter identities: sum h = sqrt 2, sum g = 0,
/// sum_k h_k h_{k+2m} = delta_{m0}, the same for g, h/g cross-orthogonality
/// under even shifts, and vanishing moments sum_k k^p g_k = 0 for p = 0..3.
inline double db4_identity_residual() {
  const auto& h = Db4::lowpass;
  const auto& g = Db4::highpass;
  double worst = 0.0;
  auto track = [&](double r) { worst = std::max(worst, std::abs(r)); };

  double sum_h = 0.0, sum_g = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    sum_h += h[k];
    sum_g += g[k];
  }
  track(sum_h - std::numbers::sqrt2);
  track(sum_g);

  for (int m = -3; m <= 3; ++m) {
    double hh = 0.0, gg = 0.0, hg = 0.0;
    for (int k = 0; k < 8; ++k) {
      const int j = k + 2 * m;
      if (j < 0 || j >= 8) continue;
      hh += h[k] * h[j];
      gg += g[k] * g[j];
      hg += h[k] * g[j];
    }
    const double delta = m == 0 ? 1.0 : 0.0;
    track(hh - delta);
    track(gg - delta);
    track(hg);
  }

  for (int p = 0; p <= 3; ++p) {
    double moment = 0.0;
    for (int k = 0; k < 8; ++k) moment += std::pow(static_cast<double>(k), p) * g[k];
    track(moment);
  }
  return worst;
}

namespace detail {

inline void ensure_db4_identities() {
  static const bool checked = [] {
    const double r = db4_identity_residual();
    if (!(r <= 1e-12)) {
      throw NumericError("db4 filter identities violated, residual " + std::to_string(r));
    }
    return true;
  }();
  (void)checked;
}

// Value of the extended signal at integer index m.
inline double extended(std::span<const double> x, long m, WaveletPadding padding) {
  const long n = static_cast<long>(x.size());
  if (m >= 0 && m < n) return x[static_cast<std::size_t>(m)];
  switch (padding) {
    case WaveletPadding::Zero:
      return 0.0;
    case WaveletPadding::Symmetric: {
      // Half-sample symmetric: ... x1 x0 | x0 x1 ... x_{n-1} | x_{n-1} x_{n-2} ...
      const long period = 2 * n;
      long r = m % period;
      if (r < 0) r += period;
      if (r >= n) r = period - 1 - r;
      return x[static_cast<std::size_t>(r)];
    }
    case WaveletPadding::Periodic: {
      long r = m % n;
      if (r < 0) r += n;
      return x[static_cast<std::size_t>(r)];
    }
  }
  return 0.0;
}

}  // namespace detail

struct WaveletLevel {
  std::vector<double> approx;
  std::vector<double> detail;
};

/// Output length of dwt_level1 for an input of length n.
inline std::size_t dwt_output_length(std::size_t n, WaveletPadding padding) {
  if (n == 0) return 0;
  if (padding == WaveletPadding::Periodic) return (n + 1) / 2;
  return (n + 7) / 2;
}

/// Single-level db4 analysis.
///
/// Zero / Symmetric: full convolution y[m] = sum_j f[j] x~[m - j] over the
/// padded signal x~, keeping odd m = 2i + 1 for i = 0 .. ceil((n + 6) / 2) - 1.
///
/// Periodic: periodization. Odd n is first made even by repeating the last
/// sample; then c[i] = sum_j f[j] x[(2i + 4 - j) mod n'] for i = 0 .. n'/2 - 1.
/// This is the orthonormal (energy-preserving) variant.
///
/// All three conventions agree with PyWavelets' dwt modes "zero", "symmetric"
/// and "periodization".
inline WaveletLevel dwt_level1(std::span<const double> x, WaveletPadding padding) {
  detail::ensure_db4_identities();
  WaveletLevel out;
  if (x.empty()) return out;

  std::vector<double> even_copy;
  std::span<const double> src = x;
  if (padding == WaveletPadding::Periodic && x.size() % 2 == 1) {
    even_copy.assign(x.begin(), x.end());
    even_copy.push_back(x.back());
    src = even_copy;
  }

  const std::size_t len = dwt_output_length(x.size(), padding);
  out.approx.resize(len);
  out.detail.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    const long m = 2 * static_cast<long>(i) + (padding == WaveletPadding::Periodic ? 4 : 1);
    double a = 0.0, d = 0.0;
    for (long j = 0; j < 8; ++j) {
      const double v = detail::extended(src, m - j, padding);
      a += Db4::lowpass[static_cast<std::size_t>(j)] * v;
      d += Db4::highpass[static_cast<std::size_t>(j)] * v;
    }
    out.approx[i] = a;
    out.detail[i] = d;
  }
  return out;
}

/// sqrt of the summed squared detail coefficients over levels 1..levels,
/// each level decomposing the previous level's approximation.
inline double wavelet_high_energy(std::span<const double> x, WaveletPadding padding, int levels = 1) {
  if (levels < 1) throw ConfigError("wavelet levels must be >= 1");
  if (x.empty()) return 0.0;
  double sum = 0.0;
  std::vector<double> current(x.begin(), x.end());
  for (int level = 0; level < levels && !current.empty(); ++level) {
    WaveletLevel lv = dwt_level1(current, padding);
    for (double d : lv.detail) sum += d * d;
    current = std::move(lv.approx);
  }
  return std::sqrt(sum);
}

// ---------------------------------------------------------------------------
// Discrete Laplacian

/// Second-difference response. Interior: n - 2 entries (empty for n < 3).
/// Circular: n entries with wrap-around neighbours.
inline std::vector<double> laplacian(std::span<const double> x, LaplacianBoundary boundary) {
  const std::size_t n = x.size();
  std::vector<double> y;
  if (boundary == LaplacianBoundary::Interior) {
    if (n < 3) return y;
    y.resize(n - 2);
    for (std::size_t j = 1; j + 1 < n; ++j) y[j - 1] = x[j + 1] - 2.0 * x[j] + x[j - 1];
    return y;
  }
  y.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double next = x[(j + 1) % n];
    const double prev = x[(j + n - 1) % n];
    y[j] = next - 2.0 * x[j] + prev;
  }
  return y;
}

/// l2 norm of the Laplacian response (square root of the Dirichlet energy).
inline double laplacian_energy(std::span<const double> x, LaplacianBoundary boundary) {
  double sum = 0.0;
  for (double v : laplacian(x, boundary)) sum += v * v;
  return std::sqrt(sum);
}

// ---------------------------------------------------------------------------
// Baselines

/// Shannon entropy (nats) of x normalized to unit mass; 0 when the mass is 0.
inline double attention_entropy(std::span<const double> x) {
  double total = 0.0;
  for (double v : x) total += v;
  if (!(total > 0.0)) return 0.0;
  double h = 0.0;
  for (double v : x) {
    if (v <= 0.0) continue;
    const double a = v / total;
    h -= a * std::log(a);
  }
  return h;
}

/// Population variance.
inline double attention_variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / n;
}

/// Dispatch to the configured operator.
inline double energy(std::span<const double> x, const SpectralConfig& config) {
  switch (config.op) {
    case Operator::FourierHigh: return fourier_band_energy(x, config.fourier_cutoff, Band::High);
    case Operator::FourierLow: return fourier_band_energy(x, config.fourier_cutoff, Band::Low);
    case Operator::FourierFull: return fourier_band_energy(x, config.fourier_cutoff, Band::Full);
    case Operator::WaveletHigh: return wavelet_high_energy(x, config.wavelet_padding, config.wavelet_levels);
    case Operator::Laplacian: return laplacian_energy(x, config.laplacian_boundary);
    case Operator::Entropy: return attention_entropy(x);
    case Operator::Variance: return attention_variance(x);
  }
  return 0.0;
}

}  // namespace signal
}  // namespace attnspec
