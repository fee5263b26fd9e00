#pragma once

// Model analysis (head/layer importance, top-k heads) and the shared
// train -> select threshold -> evaluate pipeline used by ablations.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnspec/classifier.hpp"
#include "attnspec/error.hpp"
#include "attnspec/features.hpp"
#include "attnspec/metrics.hpp"

namespace attnspec {

enum class ImportanceSpace { Standardized, Raw };

struct HeadImportance {
  HeadId head;
  double importance = 0.0;
};

/// Mean |w| over each head's coefficients present in the model layout
/// (its ctx and gen columns for a full layout). Ordered as the layout's heads.
inline std::vector<HeadImportance> head_importance(const LinearModel& model,
                                                   ImportanceSpace space = ImportanceSpace::Standardized) {
  const std::vector<double> w = space == ImportanceSpace::Standardized ? model.weights : model.raw_weights();
  const FeatureLayout& layout = model.layout;
  std::vector<HeadImportance> out;
  out.reserve(layout.heads.size());
  for (const auto& id : layout.heads) {
    double sum = 0.0;
    std::size_t count = 0;
    for (AttentionType type : {AttentionType::Context, AttentionType::Generated}) {
      if (const auto col = layout.column(id, type)) {
        sum += std::abs(w[*col]);
        ++count;
      }
    }
    out.push_back({id, count == 0 ? 0.0 : sum / static_cast<double>(count)});
  }
  return out;
}

struct LayerImportance {
  int layer = 1;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation over the layer's heads
};

inline std::vector<LayerImportance> layer_importance(const LinearModel& model, ModelDims dims,
                                                     ImportanceSpace space = ImportanceSpace::Standardized) {
  if (!model.layout.is_full() || !(model.layout.dims == dims)) {
    throw StructuralError("layer importance needs a model trained on the full layout for L=" +
                          std::to_string(dims.num_layers) + " H=" + std::to_string(dims.num_heads) +
                          "; model layout is " + model.layout.describe());
  }
  const auto heads = head_importance(model, space);
  std::vector<LayerImportance> out;
  for (int l = 1; l <= dims.num_layers; ++l) {
    double sum = 0.0, sq = 0.0;
    for (const auto& hi : heads) {
      if (hi.head.layer != l) continue;
      sum += hi.importance;
    }
    const double mean = sum / dims.num_heads;
    for (const auto& hi : heads)
      if (hi.head.layer == l) sq += (hi.importance - mean) * (hi.importance - mean);
    out.push_back({l, mean, std::sqrt(sq / dims.num_heads)});
  }
  return out;
}

/// The k most important heads, importance descending, ties by (layer, head).
inline std::vector<HeadId> top_k_heads(const LinearModel& model, std::size_t k,
                                       ImportanceSpace space = ImportanceSpace::Standardized) {
  auto heads = head_importance(model, space);
  if (k < 1 || k > heads.size()) {
    throw ConfigError("top-k must lie in [1, " + std::to_string(heads.size()) + "], got " + std::to_string(k));
  }
  std::stable_sort(heads.begin(), heads.end(), [](const HeadImportance& a, const HeadImportance& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.head < b.head;
  });
  std::vector<HeadId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(heads[i].head);
  return out;
}

// ---------------------------------------------------------------------------
// Train / validate / test pipeline

struct FeatureSplits {
  FeatureMatrix train, val, test;
};

struct PipelineResult {
  LinearModel model;
  ThresholdSelection selection;
  EvalReport report;  // on the test split
};

inline PipelineResult train_and_evaluate(const FeatureSplits& splits, const TrainOptions& options = {}) {
  PipelineResult out;
  out.model = train(splits.train, options);
  out.selection = select_threshold(out.model, splits.val);
  out.model.threshold = out.selection.threshold;
  const auto scores = predict_proba(out.model, splits.test);
  const auto labels = splits.test.labels();
  out.report = f1_at_threshold(scores, labels, out.model.threshold);
  out.report.granularity = splits.test.window > 1 ? Granularity::Span : Granularity::Token;
  out.report.operator_config = splits.test.config;
  return out;
}

struct RecordSplits {
  ModelDims dims;
  std::vector<AttentionRecord> train, val, test;
};

inline FeatureSplits extract_splits(const RecordSplits& records, const SpectralConfig& config, int window = 1) {
  FeatureSplits out{extract_features(records.train, config, records.dims),
                    extract_features(records.val, config, records.dims),
                    extract_features(records.test, config, records.dims)};
  if (window > 1) {
    out.train = aggregate_spans(out.train, window);
    out.val = aggregate_spans(out.val, window);
    out.test = aggregate_spans(out.test, window);
  }
  return out;
}

struct AblationVariant {
  std::string name;
  SpectralConfig config;
  std::optional<KeepType> keep;  // ContextOnly / GeneratedOnly
  std::optional<std::size_t> top_k;  // rank heads on the full model, retrain on the top k (capped at L*H)
};

struct AblationRow {
  std::string variant;
  EvalReport report;
  std::size_t num_features = 0;
};

struct AblationOptions {
  int window = 1;
  TrainOptions train;
};

/// One report per variant over identical splits. Feature extraction is shared
/// between variants with equal operator configs.
inline std::vector<AblationRow> run_ablation(const RecordSplits& records, std::span<const AblationVariant> variants,
                                             const AblationOptions& options = {}) {
  std::vector<std::pair<SpectralConfig, FeatureSplits>> cache;
  auto features_for = [&](const SpectralConfig& config) -> const FeatureSplits& {
    for (const auto& [c, f] : cache)
      if (c == config) return f;
    cache.emplace_back(config, extract_splits(records, config, options.window));
    return cache.back().second;
  };

  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    try {
      const FeatureSplits& base = features_for(variant.config);
      FeatureSplits current = base;
      if (variant.top_k) {
        const LinearModel full = train(base.train, options.train);
        const std::size_t k = std::min(*variant.top_k, base.train.layout.heads.size());
        const auto heads = top_k_heads(full, k);
        current = {select_head_subset(base.train, heads), select_head_subset(base.val, heads),
                   select_head_subset(base.test, heads)};
      }
      if (variant.keep) {
        current = {drop_attention_type(current.train, *variant.keep), drop_attention_type(current.val, *variant.keep),
                   drop_attention_type(current.test, *variant.keep)};
      }
      const PipelineResult result = train_and_evaluate(current, options.train);
      rows.push_back({variant.name, result.report, current.train.width()});
    } catch (const Error& e) {
      throw Error(e.kind(), "variant '" + variant.name + "': " + e.what());
    }
  }
  return rows;
}

/// High, low and full Fourier bands at the base cutoff.
inline std::vector<AblationVariant> band_sweep(const SpectralConfig& base) {
  std::vector<AblationVariant> out;
  for (Operator op : {Operator::FourierHigh, Operator::FourierLow, Operator::FourierFull}) {
    SpectralConfig c = base;
    c.op = op;
    out.push_back({to_string(op), c, std::nullopt, std::nullopt});
  }
  return out;
}

/// Fourier high band at each cutoff.
inline std::vector<AblationVariant> cutoff_sweep(const SpectralConfig& base, std::span<const double> cutoffs) {
  std::vector<AblationVariant> out;
  for (double cutoff : cutoffs) {
    SpectralConfig c = base;
    c.op = Operator::FourierHigh;
    c.fourier_cutoff = cutoff;
    c.validate();
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, cutoff).ptr;
    out.push_back({"fourier-high@" + std::string(buf, end), c, std::nullopt, std::nullopt});
  }
  return out;
}

/// 0.05, 0.10, ..., 0.50.
inline std::vector<double> default_cutoff_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 10; ++i) out.push_back(i / 20.0);
  return out;
}

inline std::vector<AblationVariant> type_ablation(const SpectralConfig& base) {
  return {{"ctx+gen", base, std::nullopt, std::nullopt},
          {"ctx-only", base, KeepType::ContextOnly, std::nullopt},
          {"gen-only", base, KeepType::GeneratedOnly, std::nullopt}};
}

inline std::vector<AblationVariant> top_k_sweep(const SpectralConfig& base, std::span<const std::size_t> ks) {
  std::vector<AblationVariant> out;
  for (std::size_t k : ks) out.push_back({"top-" + std::to_string(k), base, std::nullopt, k});
  return out;
}

}  // namespace attnspec
