#pragma once

// Monte-Carlo simulator for single-layer causal attention over tokens whose
// embeddings come from a K-component Gaussian mixture with i.i.d. uniform
// topic labels.
//
// With a fixed query, the logit of position j is u^T x_j = u^T mu_{c_j} + u^T eps_j,
// and u^T eps_j ~ N(0, sigma^2 |u|^2). The simulator therefore samples only the
// projected means m_r = u^T mu_r and the projected noise scale tau = sigma |u|;
// this is equal in distribution to sampling full embeddings and projections.
//
// What is checked empirically:
//   - adjacent labels differ with probability 1 - 1/K
//   - E[(s_{j+1} - s_j)^2] >= 2 tau^2 + (1 - 1/K) Delta^2, Delta the minimum mean gap
//   - alpha_{j+1} - alpha_j = (alpha_j + alpha_{j+1}) tanh((s_{j+1} - s_j) / 2)
//   - mean roughness grows with K (the constant of the lower bound, which
//     depends on non-degeneracy constants, is not identified; only the trend is)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "attnspec/error.hpp"
#include "attnspec/parallel.hpp"
#include "attnspec/random.hpp"

namespace attnspec::toy {

struct ToyModelConfig {
  int num_components = 1;            // K
  int position = 64;                 // t: the row attends over positions 1..t-1
  std::vector<double> projected_means;  // m_r, K entries, logit units
  double noise_std = 0.5;            // tau
  int trials = 10000;
  std::uint64_t seed = 0;

  /// Minimum pairwise |m_r - m_r'|; 0 when K = 1.
  double min_separation() const {
    double delta = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < projected_means.size(); ++a)
      for (std::size_t b = a + 1; b < projected_means.size(); ++b)
        delta = std::min(delta, std::abs(projected_means[a] - projected_means[b]));
    return projected_means.size() < 2 ? 0.0 : delta;
  }

  void validate() const {
    if (num_components < 1) throw ConfigError("K must be >= 1");
    if (position < 3) throw ConfigError("t must be >= 3");
    if (projected_means.size() != static_cast<std::size_t>(num_components)) {
      throw ConfigError("expected " + std::to_string(num_components) + " projected means, got " +
                        std::to_string(projected_means.size()));
    }
    for (double m : projected_means)
      if (!std::isfinite(m)) throw ConfigError("projected means must be finite");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw ConfigError("noise std must be finite and >= 0");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (num_components >= 2 && !(min_separation() > 0.0)) {
      throw ConfigError("projected means must be pairwise separated (Delta > 0) when K >= 2");
    }
  }

  /// Means r * delta for r = 0..K-1, so the minimum gap is delta for every K.
  static ToyModelConfig equally_spaced(int k, int t, double delta, double tau, int trials, std::uint64_t seed) {
    ToyModelConfig c;
    c.num_components = k;
    c.position = t;
    c.noise_std = tau;
    c.trials = trials;
    c.seed = seed;
    for (int r = 0; r < k; ++r) c.projected_means.push_back(r * delta);
    return c;
  }
};

struct TrialResult {
  std::vector<int> labels;        // c_1..c_{t-1}, 0-based topic ids
  std::vector<double> logits;     // s_1..s_{t-1}
  std::vector<double> attention;  // alpha_1..alpha_{t-1}
  double roughness = 0.0;         // sum_{j=1}^{t-2} (alpha_{j+1} - alpha_j)^2
  int switch_count = 0;
  std::vector<double> pair_masses;  // alpha_j + alpha_{j+1}
  std::vector<double> logit_gaps;   // s_{j+1} - s_j
};

inline TrialResult simulate_trial(const ToyModelConfig& config, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(config.position) - 1;
  const auto k = static_cast<std::uint64_t>(config.num_components);
  TrialResult r;
  r.labels.resize(n);
  r.logits.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const auto c = static_cast<int>(rng.below(k));
    r.labels[j] = c;
    r.logits[j] = config.projected_means[static_cast<std::size_t>(c)] + config.noise_std * rng.normal();
  }

  const double max_logit = *std::max_element(r.logits.begin(), r.logits.end());
  r.attention.resize(n);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    r.attention[j] = std::exp(r.logits[j] - max_logit);
    z += r.attention[j];
  }
  for (double& a : r.attention) a /= z;

  r.pair_masses.resize(n - 1);
  r.logit_gaps.resize(n - 1);
  for (std::size_t j = 0; j + 1 < n; ++j) {
    const double diff = r.attention[j + 1] - r.attention[j];
    r.roughness += diff * diff;
    r.switch_count += r.labels[j + 1] != r.labels[j] ? 1 : 0;
    r.pair_masses[j] = r.attention[j] + r.attention[j + 1];
    r.logit_gaps[j] = r.logits[j + 1] - r.logits[j];
  }
  return r;
}

/// Largest |(alpha_{j+1} - alpha_j) - m tanh(ds / 2)| over the trial's pairs.
inline double tanh_identity_residual(const TrialResult& r) {
  double worst = 0.0;
  for (std::size_t j = 0; j < r.pair_masses.size(); ++j) {
    const double lhs = r.attention[j + 1] - r.attention[j];
    const double rhs = r.pair_masses[j] * std::tanh(r.logit_gaps[j] / 2.0);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

/// |sum alpha - 1|.
inline double normalization_residual(const TrialResult& r) {
  double s = 0.0;
  for (double a : r.attention) s += a;
  return std::abs(s - 1.0);
}

/// Trial i of a run always uses the stream derive_seed(config.seed, i), so
/// results do not depend on the thread count.
inline Rng trial_rng(const ToyModelConfig& config, std::size_t trial) { return Rng(derive_seed(config.seed, trial)); }

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct SimulationSummary {
  int num_components = 0;
  int position = 0;
  double noise_std = 0.0;
  double delta = 0.0;
  int trials = 0;

  Estimate roughness;
  Estimate switch_probability;   // pooled over pairs, binomial standard error
  Estimate logit_gap_energy;     // E[(ds)^2], standard error over per-trial means
  double logit_gap_bound = 0.0;  // 2 tau^2 + (1 - 1/K) Delta^2

  double max_tanh_residual = 0.0;
  double max_normalization_residual = 0.0;
  bool all_attention_positive = true;
};

namespace detail {

struct TrialStats {
  double roughness = 0.0;
  int switches = 0;
  double mean_gap_sq = 0.0;
  double tanh_residual = 0.0;
  double norm_residual = 0.0;
  bool positive = true;
};

inline double mean_and_se(std::span<const double> v, double& se) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return mean;
}

}  // namespace detail

inline SimulationSummary simulate(const ToyModelConfig& config, unsigned threads = default_thread_count()) {
  config.validate();
  const auto trials = static_cast<std::size_t>(config.trials);
  std::vector<detail::TrialStats> stats(trials);
  parallel_for(
      trials,
      [&](std::size_t i) {
        Rng rng = trial_rng(config, i);
        const TrialResult r = simulate_trial(config, rng);
        detail::TrialStats s;
        s.roughness = r.roughness;
        s.switches = r.switch_count;
        for (double g : r.logit_gaps) s.mean_gap_sq += g * g;
        s.mean_gap_sq /= static_cast<double>(r.logit_gaps.size());
        s.tanh_residual = tanh_identity_residual(r);
        s.norm_residual = normalization_residual(r);
        s.positive = std::all_of(r.attention.begin(), r.attention.end(), [](double a) { return a > 0.0; });
        stats[i] = s;
      },
      threads);

  SimulationSummary out;
  out.num_components = config.num_components;
  out.position = config.position;
  out.noise_std = config.noise_std;
  out.delta = config.min_separation();
  out.trials = config.trials;

  std::vector<double> rough(trials), gap(trials);
  double total_switches = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    rough[i] = stats[i].roughness;
    gap[i] = stats[i].mean_gap_sq;
    total_switches += stats[i].switches;
    out.max_tanh_residual = std::max(out.max_tanh_residual, stats[i].tanh_residual);
    out.max_normalization_residual = std::max(out.max_normalization_residual, stats[i].norm_residual);
    out.all_attention_positive = out.all_attention_positive && stats[i].positive;
  }
  out.roughness.value = detail::mean_and_se(rough, out.roughness.std_error);
  out.logit_gap_energy.value = detail::mean_and_se(gap, out.logit_gap_energy.std_error);

  const double pairs = static_cast<double>(trials) * (config.position - 2);
  const double p = total_switches / pairs;
  out.switch_probability = {p, std::sqrt(p * (1.0 - p) / pairs)};

  const double k = config.num_components;
  out.logit_gap_bound = 2.0 * config.noise_std * config.noise_std + (1.0 - 1.0 / k) * out.delta * out.delta;
  return out;
}

/// Pr(c_{j+1} != c_j) with its binomial standard error. Needs >= 100 trials.
inline Estimate estimate_switch_probability(const ToyModelConfig& config) {
  if (config.trials < 100) throw ConfigError("switch-probability estimate needs >= 100 trials");
  return simulate(config).switch_probability;
}

struct LogitGapEnergy {
  double estimate = 0.0;
  double std_error = 0.0;
  double analytic_bound = 0.0;
  bool bound_respected = false;  // estimate >= bound - 3 std_error
};

/// E[(s_{j+1} - s_j)^2] against 2 tau^2 + (1 - 1/K) Delta^2. Needs K >= 2 and >= 1000 trials.
inline LogitGapEnergy estimate_logit_gap_energy(const ToyModelConfig& config) {
  if (config.num_components < 2) throw ConfigError("logit-gap bound needs K >= 2");
  if (config.trials < 1000) throw ConfigError("logit-gap estimate needs >= 1000 trials");
  const SimulationSummary s = simulate(config);
  LogitGapEnergy out{s.logit_gap_energy.value, s.logit_gap_energy.std_error, s.logit_gap_bound, false};
  out.bound_respected = out.estimate >= out.analytic_bound - 3.0 * out.std_error;
  return out;
}

/// Configurations K in ks with equally spaced means; seeds derived per K.
inline std::vector<ToyModelConfig> k_sweep_configs(std::span<const int> ks, int t, double delta, double tau,
                                                   int trials, std::uint64_t seed) {
  std::vector<ToyModelConfig> out;
  for (int k : ks)
    out.push_back(ToyModelConfig::equally_spaced(k, t, delta, tau, trials, derive_seed(seed, static_cast<std::uint64_t>(k))));
  return out;
}

/// One summary per configuration. All configurations must share t, tau,
/// trials and (for K >= 2) the minimum separation.
inline std::vector<SimulationSummary> roughness_curve(std::span<const ToyModelConfig> configs) {
  double shared_delta = -1.0;
  for (const auto& c : configs) {
    c.validate();
    const auto& first = configs.front();
    if (c.position != first.position || c.noise_std != first.noise_std || c.trials != first.trials) {
      throw ConfigError("roughness curve configurations must share t, tau and trials");
    }
    if (c.num_components >= 2) {
      if (shared_delta < 0.0) shared_delta = c.min_separation();
      else if (std::abs(c.min_separation() - shared_delta) > 1e-12) {
        throw ConfigError("roughness curve configurations must share the minimum separation Delta");
      }
    }
  }
  std::vector<SimulationSummary> out;
  for (const auto& c : configs) out.push_back(simulate(c));
  return out;
}

/// True when means are non-decreasing in K up to `tolerance_se` pooled
/// standard errors between consecutive entries.
inline bool non_decreasing(std::span<const SimulationSummary> curve, double tolerance_se = 2.0) {
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto& a = curve[i - 1].roughness;
    const auto& b = curve[i].roughness;
    const double pooled = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    if (b.value < a.value - tolerance_se * pooled) return false;
  }
  return true;
}

struct NondegeneracyCell {
  double eta = 0.0;
  double bound = 0.0;
  double pr_mass = 0.0;   // Pr(m >= eta)
  double pr_gap = 0.0;    // Pr(|ds| <= B)
  double pr_event = 0.0;  // Pr(m >= eta and |ds| <= B)
  double kappa = 0.0;     // E[(ds)^2 1_E] / E[(ds)^2]; 0 when E[(ds)^2] = 0
};

/// Empirical frequencies of the non-degeneracy event over a grid of (eta, B).
/// Diagnostic only: the constants are not identified, so nothing is asserted.
inline std::vector<NondegeneracyCell> nondegeneracy_report(const ToyModelConfig& config, std::span<const double> etas,
                                                           std::span<const double> bounds) {
  config.validate();
  if (config.trials < 1000) throw ConfigError("non-degeneracy report needs >= 1000 trials");
  const std::size_t cells = etas.size() * bounds.size();
  std::vector<double> mass_hits(cells), gap_hits(cells), event_hits(cells), event_energy(cells);
  double total_energy = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(config.trials); ++i) {
    Rng rng = trial_rng(config, i);
    const TrialResult r = simulate_trial(config, rng);
    for (std::size_t j = 0; j < r.pair_masses.size(); ++j) {
      const double m = r.pair_masses[j], ds = r.logit_gaps[j];
      total_energy += ds * ds;
      pairs += 1.0;
      for (std::size_t a = 0; a < etas.size(); ++a) {
        for (std::size_t b = 0; b < bounds.size(); ++b) {
          const std::size_t c = a * bounds.size() + b;
          const bool mass_ok = m >= etas[a];
          const bool gap_ok = std::abs(ds) <= bounds[b];
          mass_hits[c] += mass_ok;
          gap_hits[c] += gap_ok;
          if (mass_ok && gap_ok) {
            event_hits[c] += 1.0;
            event_energy[c] += ds * ds;
          }
        }
      }
    }
  }
  std::vector<NondegeneracyCell> out;
  for (std::size_t a = 0; a < etas.size(); ++a) {
    for (std::size_t b = 0; b < bounds.size(); ++b) {
      const std::size_t c = a * bounds.size() + b;
      out.push_back({etas[a], bounds[b], mass_hits[c] / pairs, gap_hits[c] / pairs, event_hits[c] / pairs,
                     total_energy > 0.0 ? event_energy[c] / total_energy : 0.0});
    }
  }
  return out;
}

}  // namespace attnspec::toy
