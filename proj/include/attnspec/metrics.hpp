#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnspec/error.hpp"
#include "attnspec/signal_ops.hpp"

namespace attnspec {

enum class Granularity { Token, Span };

inline std::string to_string(Granularity g) { return g == Granularity::Token ? "token" : "span"; }

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

struct EvalReport {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> auroc;  // undefined for single-class labels
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  Confusion confusion;
  double threshold_used = 0.5;
  Granularity granularity = Granularity::Token;
  SpectralConfig operator_config;
};

namespace detail {

inline void check_sizes(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw StructuralError("scores (" + std::to_string(scores.size()) + ") and labels (" +
                          std::to_string(labels.size()) + ") differ in length");
  }
}

}  // namespace detail

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Computed from average ranks (Mann-Whitney U); the
/// result is exact because average ranks are half-integers.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_sizes(scores, labels);
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y != 0 ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("AUROC is undefined with a single class");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the rank sum of positives, kept integral.
  std::size_t twice_rank_sum = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const std::size_t twice_avg_rank = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] != 0) twice_rank_sum += twice_avg_rank;
    i = j + 1;
  }
  // 2U = 2R - n_pos (n_pos + 1)
  const std::size_t twice_u = twice_rank_sum - n_pos * (n_pos + 1);
  return (static_cast<double>(twice_u) / 2.0) / static_cast<double>(n_pos * n_neg);
}

/// Confusion counts with predict-positive iff score >= threshold.
inline Confusion confusion_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  detail::check_sizes(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] != 0;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline EvalReport f1_at_threshold(std::span<const double> scores, std::span<const int> labels, double threshold) {
  EvalReport r;
  r.confusion = confusion_at(scores, labels, threshold);
  r.precision = r.confusion.precision();
  r.recall = r.confusion.recall();
  r.f1 = r.confusion.f1();
  r.n_pos = r.confusion.tp + r.confusion.fn;
  r.n_neg = r.confusion.fp + r.confusion.tn;
  r.threshold_used = threshold;
  if (r.n_pos > 0 && r.n_neg > 0) r.auroc = auroc(scores, labels);
  return r;
}

struct ThresholdSelection {
  double threshold = 0.5;
  double f1 = 0.0;
  bool fallback = false;  // validation had a single class; 0.5 was returned
};

/// Candidate thresholds are the midpoints between consecutive distinct sorted
/// scores plus 0.5. Returns the F1-maximizing candidate; ties go to the
/// candidate nearest 0.5, then to the smaller one.
inline ThresholdSelection select_threshold(std::span<const double> scores, std::span<const int> labels) {
  detail::check_sizes(scores, labels);
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y != 0 ? 1 : 0;
  ThresholdSelection out;
  if (n_pos == 0 || n_pos == labels.size()) {
    out.fallback = true;
    out.f1 = confusion_at(scores, labels, 0.5).f1();
    return out;
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> sorted(scores.size());
  std::vector<std::size_t> pos_suffix(scores.size() + 1, 0);  // positives among sorted[i..]
  for (std::size_t i = 0; i < order.size(); ++i) sorted[i] = scores[order[i]];
  for (std::size_t i = order.size(); i-- > 0;) pos_suffix[i] = pos_suffix[i + 1] + (labels[order[i]] != 0 ? 1 : 0);

  auto f1_for = [&](double thr) {
    const auto first = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), thr) - sorted.begin());
    const std::size_t predicted = sorted.size() - first;
    const std::size_t tp = pos_suffix[first];
    const std::size_t fp = predicted - tp;
    const std::size_t fn = n_pos - tp;
    Confusion c{tp, fp, 0, fn};
    return c.f1();
  };

  std::vector<double> candidates{0.5};
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i)
    if (sorted[i + 1] != sorted[i]) candidates.push_back(sorted[i] + (sorted[i + 1] - sorted[i]) / 2.0);

  bool first = true;
  for (double thr : candidates) {
    const double f = f1_for(thr);
    const auto closer = [&] {
      const double d_new = std::abs(thr - 0.5), d_old = std::abs(out.threshold - 0.5);
      return d_new < d_old || (d_new == d_old && thr < out.threshold);
    };
    if (first || f > out.f1 || (f == out.f1 && closer())) {
      out.threshold = thr;
      out.f1 = f;
      first = false;
    }
  }
  return out;
}

}  // namespace attnspec
