#pragma once

// Attention records and the high-frequency energy feature layout.
//
// Full layout for L layers and H heads (2*L*H columns, 0-based):
//   ctx energy of (l, h) -> (l-1)*H + (h-1)
//   gen energy of (l, h) -> L*H + (l-1)*H + (h-1)
// Subsets keep the same shape: the ctx block (if present) precedes the gen
// block (if present), and each block lists the retained heads in layer-major,
// head-minor order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnspec/error.hpp"
#include "attnspec/parallel.hpp"
#include "attnspec/signal_ops.hpp"

namespace attnspec {

/// 1-based (layer, head) pair.
struct HeadId {
  int layer = 1;
  int head = 1;
  friend auto operator<=>(const HeadId&, const HeadId&) = default;
};

inline std::string to_string(const HeadId& id) {
  return "(" + std::to_string(id.layer) + "," + std::to_string(id.head) + ")";
}

enum class AttentionType { Context, Generated };
enum class KeepType { ContextOnly, GeneratedOnly };

struct ModelDims {
  int num_layers = 0;
  int num_heads = 0;
  std::size_t num_heads_total() const { return static_cast<std::size_t>(num_layers) * static_cast<std::size_t>(num_heads); }
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Column layout of a feature matrix: which heads and which attention types
/// are present, in which order.
struct FeatureLayout {
  ModelDims dims;
  std::vector<HeadId> heads;  // layer-major, head-minor
  bool has_ctx = true;
  bool has_gen = true;

  static FeatureLayout full(ModelDims dims) {
    FeatureLayout layout;
    layout.dims = dims;
    for (int l = 1; l <= dims.num_layers; ++l)
      for (int h = 1; h <= dims.num_heads; ++h) layout.heads.push_back({l, h});
    return layout;
  }

  std::size_t blocks() const { return static_cast<std::size_t>(has_ctx) + static_cast<std::size_t>(has_gen); }
  std::size_t width() const { return heads.size() * blocks(); }

  bool is_full() const {
    return has_ctx && has_gen && heads.size() == dims.num_heads_total();
  }

  /// Column of (head, type), or nullopt when not present.
  std::optional<std::size_t> column(const HeadId& id, AttentionType type) const {
    if ((type == AttentionType::Context && !has_ctx) || (type == AttentionType::Generated && !has_gen)) {
      return std::nullopt;
    }
    const auto it = std::find(heads.begin(), heads.end(), id);
    if (it == heads.end()) return std::nullopt;
    const auto pos = static_cast<std::size_t>(it - heads.begin());
    const bool second_block = type == AttentionType::Generated && has_ctx;
    return second_block ? heads.size() + pos : pos;
  }

  /// (head, type) of every column, in column order.
  std::vector<std::pair<HeadId, AttentionType>> columns() const {
    std::vector<std::pair<HeadId, AttentionType>> out;
    out.reserve(width());
    if (has_ctx)
      for (const auto& id : heads) out.emplace_back(id, AttentionType::Context);
    if (has_gen)
      for (const auto& id : heads) out.emplace_back(id, AttentionType::Generated);
    return out;
  }

  std::string describe() const {
    std::string s = "L=" + std::to_string(dims.num_layers) + " H=" + std::to_string(dims.num_heads) +
                    " heads=" + std::to_string(heads.size()) + " blocks=";
    s += has_ctx ? (has_gen ? "ctx+gen" : "ctx") : (has_gen ? "gen" : "none");
    return s;
  }

  friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;
};

/// Attention of one generation step across all layers and heads.
///
/// weights is row-major [layer][head][position] with N + step_index - 1
/// positions per row: context positions first, then generated positions.
struct AttentionRecord {
  std::string example_id;
  int step_index = 1;  // 1-based
  int context_len = 1;
  ModelDims dims;
  std::vector<double> weights;
  int label = 0;  // 1 = hallucinated

  std::size_t row_length() const {
    return static_cast<std::size_t>(context_len) + static_cast<std::size_t>(step_index) - 1;
  }

  std::size_t gen_prefix_len() const { return static_cast<std::size_t>(step_index) - 1; }

  std::span<const double> row(int layer, int head) const {
    const std::size_t offset =
        (static_cast<std::size_t>(layer - 1) * static_cast<std::size_t>(dims.num_heads) + static_cast<std::size_t>(head - 1)) *
        row_length();
    return std::span<const double>(weights).subspan(offset, row_length());
  }

  std::span<const double> context_slice(int layer, int head) const {
    return row(layer, head).first(static_cast<std::size_t>(context_len));
  }

  std::span<const double> generated_slice(int layer, int head) const {
    return row(layer, head).subspan(static_cast<std::size_t>(context_len));
  }

  std::string where() const {
    return "record (example '" + example_id + "', step " + std::to_string(step_index) + ")";
  }

  /// Shape and value checks; row mass may be below 1 (special tokens are not
  /// dumped) but never above 1 + 1e-3.
  void validate() const {
    if (dims.num_layers < 1 || dims.num_heads < 1 || context_len < 1 || step_index < 1) {
      throw StructuralError(where() + ": L, H, N and step index must all be >= 1");
    }
    const std::size_t expected = dims.num_heads_total() * row_length();
    if (weights.size() != expected) {
      throw StructuralError(where() + ": expected " + std::to_string(expected) + " weights for L=" +
                            std::to_string(dims.num_layers) + " H=" + std::to_string(dims.num_heads) +
                            " N=" + std::to_string(context_len) + ", found " + std::to_string(weights.size()));
    }
    for (int l = 1; l <= dims.num_layers; ++l) {
      for (int h = 1; h <= dims.num_heads; ++h) {
        double sum = 0.0;
        for (double w : row(l, h)) {
          if (!std::isfinite(w) || w < 0.0) {
            throw DataError(where() + ": weight at layer " + std::to_string(l) + " head " + std::to_string(h) +
                            " is negative or non-finite");
          }
          sum += w;
        }
        if (sum > 1.0 + 1e-3) {
          throw DataError(where() + ": attention mass " + std::to_string(sum) + " at layer " + std::to_string(l) +
                          " head " + std::to_string(h) + " exceeds 1");
        }
      }
    }
  }
};

struct FeatureVector {
  std::vector<double> values;
  int label = 0;
  std::string example_id;
  int step_index = 1;
};

struct FeatureMatrix {
  FeatureLayout layout;
  SpectralConfig config;
  int window = 1;  // 1 = token level, > 1 = span level
  std::vector<FeatureVector> rows;

  std::size_t width() const { return layout.width(); }
  std::size_t size() const { return rows.size(); }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r.label);
    return out;
  }

  void validate() const {
    for (const auto& r : rows) {
      if (r.values.size() != width()) {
        throw StructuralError("feature row (example '" + r.example_id + "', step " + std::to_string(r.step_index) +
                              ") has " + std::to_string(r.values.size()) + " columns, layout " + layout.describe() +
                              " expects " + std::to_string(width()));
      }
    }
  }
};

/// Energy features of one record under the full layout.
inline FeatureVector extract_token_features(const AttentionRecord& record, const SpectralConfig& config) {
  config.validate();
  record.validate();
  const ModelDims dims = record.dims;
  const std::size_t lh = dims.num_heads_total();
  FeatureVector v;
  v.values.assign(2 * lh, 0.0);
  v.label = record.label;
  v.example_id = record.example_id;
  v.step_index = record.step_index;
  for (int l = 1; l <= dims.num_layers; ++l) {
    for (int h = 1; h <= dims.num_heads; ++h) {
      const std::size_t idx = static_cast<std::size_t>(l - 1) * static_cast<std::size_t>(dims.num_heads) +
                              static_cast<std::size_t>(h - 1);
      v.values[idx] = signal::energy(record.context_slice(l, h), config);
      v.values[lh + idx] = signal::energy(record.generated_slice(l, h), config);
    }
  }
  return v;
}

/// As above, also checking the record against declared model dims.
inline FeatureVector extract_token_features(const AttentionRecord& record, const SpectralConfig& config,
                                            ModelDims expected) {
  if (record.dims != expected) {
    throw StructuralError(record.where() + ": dims L=" + std::to_string(record.dims.num_layers) +
                          " H=" + std::to_string(record.dims.num_heads) + " differ from declared L=" +
                          std::to_string(expected.num_layers) + " H=" + std::to_string(expected.num_heads));
  }
  return extract_token_features(record, config);
}

/// Token-level feature matrix over many records; extraction runs in parallel
/// and row order follows record order.
inline FeatureMatrix extract_features(std::span<const AttentionRecord> records, const SpectralConfig& config,
                                      ModelDims dims, unsigned threads = default_thread_count()) {
  config.validate();
  FeatureMatrix m;
  m.layout = FeatureLayout::full(dims);
  m.config = config;
  m.rows.resize(records.size());
  parallel_for(
      records.size(), [&](std::size_t i) { m.rows[i] = extract_token_features(records[i], config, dims); }, threads);
  return m;
}

/// Mean-pools consecutive non-overlapping windows of steps within each
/// example. A window is labelled 1 iff any of its tokens is; a short trailing
/// window is kept. Output rows are ordered by (example_id, first step).
inline FeatureMatrix aggregate_spans(const FeatureMatrix& matrix, int window) {
  if (window < 1) throw ConfigError("span window must be >= 1, got " + std::to_string(window));
  matrix.validate();

  std::vector<const FeatureVector*> sorted;
  sorted.reserve(matrix.rows.size());
  for (const auto& r : matrix.rows) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(), [](const FeatureVector* a, const FeatureVector* b) {
    if (a->example_id != b->example_id) return a->example_id < b->example_id;
    return a->step_index < b->step_index;
  });

  FeatureMatrix out;
  out.layout = matrix.layout;
  out.config = matrix.config;
  out.window = matrix.window * window;
  const std::size_t width = matrix.width();

  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j]->example_id == sorted[i]->example_id) {
      if (sorted[j]->step_index != sorted[j - 1]->step_index + 1) {
        throw StructuralError("example '" + sorted[i]->example_id + "': step " +
                              std::to_string(sorted[j]->step_index) + " follows step " +
                              std::to_string(sorted[j - 1]->step_index) + "; span aggregation needs contiguous steps");
      }
      ++j;
    }
    for (std::size_t start = i; start < j; start += static_cast<std::size_t>(window)) {
      const std::size_t stop = std::min(j, start + static_cast<std::size_t>(window));
      FeatureVector v;
      v.values.assign(width, 0.0);
      v.example_id = sorted[start]->example_id;
      v.step_index = sorted[start]->step_index;
      for (std::size_t r = start; r < stop; ++r) {
        for (std::size_t c = 0; c < width; ++c) v.values[c] += sorted[r]->values[c];
        if (sorted[r]->label != 0) v.label = 1;
      }
      const double count = static_cast<double>(stop - start);
      for (double& x : v.values) x /= count;
      out.rows.push_back(std::move(v));
    }
    i = j;
  }
  return out;
}

namespace detail {

inline FeatureMatrix take_columns(const FeatureMatrix& matrix, const FeatureLayout& layout,
                                  const std::vector<std::size_t>& cols) {
  FeatureMatrix out;
  out.layout = layout;
  out.config = matrix.config;
  out.window = matrix.window;
  out.rows.reserve(matrix.rows.size());
  for (const auto& r : matrix.rows) {
    FeatureVector v;
    v.label = r.label;
    v.example_id = r.example_id;
    v.step_index = r.step_index;
    v.values.reserve(cols.size());
    for (std::size_t c : cols) v.values.push_back(r.values[c]);
    out.rows.push_back(std::move(v));
  }
  return out;
}

}  // namespace detail

/// Keeps the ctx and gen columns of the selected heads, in layout order.
inline FeatureMatrix select_head_subset(const FeatureMatrix& matrix, std::span<const HeadId> heads) {
  matrix.validate();
  const ModelDims dims = matrix.layout.dims;
  std::set<HeadId> chosen;
  for (const auto& id : heads) {
    if (id.layer < 1 || id.layer > dims.num_layers || id.head < 1 || id.head > dims.num_heads) {
      throw ConfigError("head " + to_string(id) + " is outside L=" + std::to_string(dims.num_layers) +
                        " H=" + std::to_string(dims.num_heads));
    }
    if (!chosen.insert(id).second) throw ConfigError("head " + to_string(id) + " selected twice");
    if (std::find(matrix.layout.heads.begin(), matrix.layout.heads.end(), id) == matrix.layout.heads.end()) {
      throw ConfigError("head " + to_string(id) + " is not present in layout " + matrix.layout.describe());
    }
  }

  FeatureLayout layout = matrix.layout;
  layout.heads.clear();
  for (const auto& id : matrix.layout.heads)
    if (chosen.contains(id)) layout.heads.push_back(id);

  std::vector<std::size_t> cols;
  for (const auto& [id, type] : layout.columns()) cols.push_back(*matrix.layout.column(id, type));
  return detail::take_columns(matrix, layout, cols);
}

/// Keeps only the ctx block or only the gen block of a two-block matrix.
inline FeatureMatrix drop_attention_type(const FeatureMatrix& matrix, KeepType keep) {
  matrix.validate();
  if (!(matrix.layout.has_ctx && matrix.layout.has_gen)) {
    throw StructuralError("attention-type selection needs both ctx and gen blocks, layout is " +
                          matrix.layout.describe());
  }
  FeatureLayout layout = matrix.layout;
  layout.has_ctx = keep == KeepType::ContextOnly;
  layout.has_gen = keep == KeepType::GeneratedOnly;
  const std::size_t half = matrix.layout.heads.size();
  std::vector<std::size_t> cols(half);
  for (std::size_t c = 0; c < half; ++c) cols[c] = keep == KeepType::ContextOnly ? c : half + c;
  return detail::take_columns(matrix, layout, cols);
}

}  // namespace attnspec
