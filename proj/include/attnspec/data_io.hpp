#pragma once

// File formats and dataset handling.
//
// Attention dump (binary, little-endian):
//   offset 0   "ATTN"
//   offset 4   u32 format_version (= 1)
//   offset 8   u32 N (context length)
//   offset 12  u32 T (generated length)
//   offset 16  u32 L (layers)
//   offset 20  u32 H (heads)
//   offset 24  for step i = 1..T: L*H*(N + i - 1) f32, ordered layer, head, position
//              (context positions first, then generated positions)
// File size = 24 + 4 * sum_{i=1..T} L*H*(N + i - 1).
//
// A JSON dump with the same logical content is accepted for small fixtures:
//   {"format_version": 1, "context_len": N, "gen_len": T, "num_layers": L,
//    "num_heads": H, "steps": [[[[w, ...] per head] per layer] per step]}
//
// Manifest (JSON): format_version, model_name, num_layers, num_heads and
// examples [{id, context_len, gen_len, labels[T], attention_file}], with
// attention_file relative to the manifest's directory.
//
// Feature file: CSV with header example_id,step_index,label,f_0..f_{d-1} plus a
// sidecar "<csv>.meta.json" holding the column layout and operator config.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "attnspec/error.hpp"
#include "attnspec/features.hpp"
#include "attnspec/random.hpp"
#include "attnspec/serialization.hpp"
#include "attnspec/signal_ops.hpp"

namespace attnspec {

inline constexpr std::uint32_t kDumpFormatVersion = 1;
inline constexpr int kManifestFormatVersion = 1;
inline constexpr std::size_t kDumpHeaderBytes = 24;

// ---------------------------------------------------------------------------
// Attention dumps

/// Attention of one example: steps[i] holds L*H*(N + i) floats for step i + 1.
struct AttentionDump {
  std::uint32_t context_len = 0;
  std::uint32_t gen_len = 0;
  std::uint32_t num_layers = 0;
  std::uint32_t num_heads = 0;
  std::vector<std::vector<float>> steps;

  std::size_t step_floats(std::size_t step_index) const {  // 1-based step
    return static_cast<std::size_t>(num_layers) * num_heads * (context_len + step_index - 1);
  }

  std::size_t total_floats() const {
    std::size_t total = 0;
    for (std::size_t i = 1; i <= gen_len; ++i) total += step_floats(i);
    return total;
  }

  std::size_t file_size() const { return kDumpHeaderBytes + 4 * total_floats(); }

  friend bool operator==(const AttentionDump&, const AttentionDump&) = default;
};

enum class DumpErrorKind { BadMagic, VersionMismatch, SizeMismatch, InvalidValue, Io };

class DumpError : public DataError {
 public:
  DumpError(DumpErrorKind kind, const std::string& what) : DataError(what), dump_kind_(kind) {}
  DumpErrorKind dump_kind() const noexcept { return dump_kind_; }

 private:
  DumpErrorKind dump_kind_;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void check_dump_shape(const AttentionDump& d, const std::string& where) {
  if (d.context_len < 1 || d.gen_len < 1 || d.num_layers < 1 || d.num_heads < 1) {
    throw StructuralError(where + ": N, T, L, H must all be >= 1");
  }
  if (d.steps.size() != d.gen_len) {
    throw StructuralError(where + ": " + std::to_string(d.steps.size()) + " steps for T=" + std::to_string(d.gen_len));
  }
  for (std::size_t i = 0; i < d.steps.size(); ++i) {
    if (d.steps[i].size() != d.step_floats(i + 1)) {
      throw StructuralError(where + ": step " + std::to_string(i + 1) + " has " + std::to_string(d.steps[i].size()) +
                            " floats, expected " + std::to_string(d.step_floats(i + 1)));
    }
    for (float v : d.steps[i]) {
      if (!std::isfinite(v) || v < 0.0f) {
        throw DumpError(DumpErrorKind::InvalidValue,
                        where + ": step " + std::to_string(i + 1) + " holds a negative or non-finite weight");
      }
    }
  }
}

}  // namespace detail

inline std::string encode_dump(const AttentionDump& d) {
  detail::check_dump_shape(d, "attention dump");
  std::string out;
  out.reserve(d.file_size());
  out.append("ATTN", 4);
  detail::put_u32(out, kDumpFormatVersion);
  detail::put_u32(out, d.context_len);
  detail::put_u32(out, d.gen_len);
  detail::put_u32(out, d.num_layers);
  detail::put_u32(out, d.num_heads);
  for (const auto& step : d.steps)
    for (float v : step) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline AttentionDump decode_dump(std::string_view bytes, const std::string& name = "dump") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 4 || std::memcmp(p, "ATTN", 4) != 0) {
    throw DumpError(DumpErrorKind::BadMagic, name + ": bad magic at offset 0 (expected \"ATTN\")");
  }
  if (bytes.size() < kDumpHeaderBytes) {
    throw DumpError(DumpErrorKind::SizeMismatch, name + ": truncated header, expected at least " +
                                                     std::to_string(kDumpHeaderBytes) + " bytes, found " +
                                                     std::to_string(bytes.size()));
  }
  const std::uint32_t version = detail::get_u32(p + 4);
  if (version != kDumpFormatVersion) {
    throw DumpError(DumpErrorKind::VersionMismatch, name + ": format version " + std::to_string(version) +
                                                        " at offset 4, expected " + std::to_string(kDumpFormatVersion));
  }
  AttentionDump d;
  d.context_len = detail::get_u32(p + 8);
  d.gen_len = detail::get_u32(p + 12);
  d.num_layers = detail::get_u32(p + 16);
  d.num_heads = detail::get_u32(p + 20);
  if (d.context_len < 1 || d.gen_len < 1 || d.num_layers < 1 || d.num_heads < 1) {
    throw StructuralError(name + ": header declares a zero dimension (N=" + std::to_string(d.context_len) +
                          " T=" + std::to_string(d.gen_len) + " L=" + std::to_string(d.num_layers) +
                          " H=" + std::to_string(d.num_heads) + ")");
  }
  const std::size_t expected = d.file_size();
  if (bytes.size() != expected) {
    throw DumpError(DumpErrorKind::SizeMismatch, name + ": expected " + std::to_string(expected) +
                                                     " bytes for N=" + std::to_string(d.context_len) +
                                                     " T=" + std::to_string(d.gen_len) + " L=" +
                                                     std::to_string(d.num_layers) + " H=" +
                                                     std::to_string(d.num_heads) + ", found " +
                                                     std::to_string(bytes.size()));
  }
  std::size_t offset = kDumpHeaderBytes;
  d.steps.resize(d.gen_len);
  for (std::size_t i = 0; i < d.gen_len; ++i) {
    auto& step = d.steps[i];
    step.resize(d.step_floats(i + 1));
    for (float& v : step) {
      v = std::bit_cast<float>(detail::get_u32(p + offset));
      if (!std::isfinite(v) || v < 0.0f) {
        throw DumpError(DumpErrorKind::InvalidValue,
                        name + ": negative or non-finite float at offset " + std::to_string(offset));
      }
      offset += 4;
    }
  }
  return d;
}

inline AttentionDump dump_from_json(const json& j, const std::string& name = "dump") {
  try {
    if (j.at("format_version").get<std::uint32_t>() != kDumpFormatVersion) {
      throw DumpError(DumpErrorKind::VersionMismatch, name + ": format version " + j.at("format_version").dump() +
                                                          ", expected " + std::to_string(kDumpFormatVersion));
    }
    AttentionDump d;
    d.context_len = j.at("context_len").get<std::uint32_t>();
    d.gen_len = j.at("gen_len").get<std::uint32_t>();
    d.num_layers = j.at("num_layers").get<std::uint32_t>();
    d.num_heads = j.at("num_heads").get<std::uint32_t>();
    for (const auto& step : j.at("steps")) {
      std::vector<float> flat;
      for (const auto& layer : step)
        for (const auto& head : layer)
          for (const auto& w : head) flat.push_back(w.get<float>());
      d.steps.push_back(std::move(flat));
    }
    detail::check_dump_shape(d, name);
    return d;
  } catch (const json::exception& e) {
    throw DataError(name + ": malformed JSON dump: " + e.what());
  }
}

inline json dump_to_json(const AttentionDump& d) {
  detail::check_dump_shape(d, "attention dump");
  json steps = json::array();
  for (std::size_t i = 0; i < d.steps.size(); ++i) {
    const std::size_t row = d.context_len + i;
    json layers = json::array();
    for (std::size_t l = 0; l < d.num_layers; ++l) {
      json heads = json::array();
      for (std::size_t h = 0; h < d.num_heads; ++h) {
        const auto begin = d.steps[i].begin() + static_cast<std::ptrdiff_t>((l * d.num_heads + h) * row);
        heads.push_back(std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(row)));
      }
      layers.push_back(std::move(heads));
    }
    steps.push_back(std::move(layers));
  }
  return {{"format_version", kDumpFormatVersion}, {"context_len", d.context_len}, {"gen_len", d.gen_len},
          {"num_layers", d.num_layers},           {"num_heads", d.num_heads},     {"steps", steps}};
}

inline void write_dump(const std::string& path, const AttentionDump& d) {
  if (path.ends_with(".json")) {
    write_json_file(path, dump_to_json(d));
    return;
  }
  const std::string bytes = encode_dump(d);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DumpError(DumpErrorKind::Io, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DumpError(DumpErrorKind::Io, "failed writing '" + path + "'");
}

inline AttentionDump read_dump(const std::string& path) {
  if (path.ends_with(".json")) return dump_from_json(read_json_file(path), path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DumpError(DumpErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return decode_dump(buffer.str(), path);
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestExample {
  std::string id;
  int context_len = 1;
  int gen_len = 1;
  std::vector<int> labels;
  std::string attention_file;
};

struct DumpManifest {
  int format_version = kManifestFormatVersion;
  std::string model_name;
  ModelDims dims;
  std::vector<ManifestExample> examples;
  std::filesystem::path base_dir;  // directory attention files are relative to; not serialized

  void validate() const {
    if (dims.num_layers < 1 || dims.num_heads < 1) throw DataError("manifest: num_layers and num_heads must be >= 1");
    for (const auto& e : examples) {
      if (e.context_len < 1 || e.gen_len < 1) {
        throw DataError("manifest example '" + e.id + "': context_len and gen_len must be >= 1");
      }
      if (e.labels.size() != static_cast<std::size_t>(e.gen_len)) {
        throw DataError("manifest example '" + e.id + "': " + std::to_string(e.labels.size()) +
                        " labels for gen_len " + std::to_string(e.gen_len));
      }
      for (int y : e.labels)
        if (y != 0 && y != 1) throw DataError("manifest example '" + e.id + "': labels must be 0 or 1");
    }
  }
};

inline json to_json_value(const DumpManifest& m) {
  json examples = json::array();
  for (const auto& e : m.examples) {
    examples.push_back({{"id", e.id},
                        {"context_len", e.context_len},
                        {"gen_len", e.gen_len},
                        {"labels", e.labels},
                        {"attention_file", e.attention_file}});
  }
  return {{"format_version", m.format_version},
          {"model_name", m.model_name},
          {"num_layers", m.dims.num_layers},
          {"num_heads", m.dims.num_heads},
          {"examples", examples}};
}

inline DumpManifest manifest_from_json(const json& j, const std::filesystem::path& base_dir) {
  try {
    DumpManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kManifestFormatVersion) {
      throw DataError("manifest format version " + std::to_string(m.format_version) + ", expected " +
                      std::to_string(kManifestFormatVersion));
    }
    m.model_name = j.value("model_name", std::string{});
    m.dims = {j.at("num_layers").get<int>(), j.at("num_heads").get<int>()};
    for (const auto& e : j.at("examples")) {
      m.examples.push_back({e.at("id").get<std::string>(), e.at("context_len").get<int>(), e.at("gen_len").get<int>(),
                            e.at("labels").get<std::vector<int>>(), e.at("attention_file").get<std::string>()});
    }
    m.base_dir = base_dir;
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
}

inline DumpManifest read_manifest(const std::string& path) {
  return manifest_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
}

inline void write_manifest(const std::string& path, const DumpManifest& m) {
  m.validate();
  write_json_file(path, to_json_value(m));
}

/// Reads an example's dump and checks it against the manifest entry.
inline AttentionDump read_example_dump(const DumpManifest& m, const ManifestExample& e) {
  const std::string path = (m.base_dir / e.attention_file).string();
  AttentionDump d = read_dump(path);
  if (d.context_len != static_cast<std::uint32_t>(e.context_len) ||
      d.gen_len != static_cast<std::uint32_t>(e.gen_len) ||
      d.num_layers != static_cast<std::uint32_t>(m.dims.num_layers) ||
      d.num_heads != static_cast<std::uint32_t>(m.dims.num_heads)) {
    throw StructuralError("example '" + e.id + "' (" + path + "): dump header N=" + std::to_string(d.context_len) +
                          " T=" + std::to_string(d.gen_len) + " L=" + std::to_string(d.num_layers) +
                          " H=" + std::to_string(d.num_heads) + " disagrees with manifest N=" +
                          std::to_string(e.context_len) + " T=" + std::to_string(e.gen_len) +
                          " L=" + std::to_string(m.dims.num_layers) + " H=" + std::to_string(m.dims.num_heads));
  }
  return d;
}

/// One labelled record per generation step.
inline std::vector<AttentionRecord> to_records(const ManifestExample& e, const AttentionDump& d) {
  std::vector<AttentionRecord> out;
  out.reserve(d.gen_len);
  for (std::size_t i = 0; i < d.gen_len; ++i) {
    AttentionRecord r;
    r.example_id = e.id;
    r.step_index = static_cast<int>(i + 1);
    r.context_len = static_cast<int>(d.context_len);
    r.dims = {static_cast<int>(d.num_layers), static_cast<int>(d.num_heads)};
    r.weights.assign(d.steps[i].begin(), d.steps[i].end());
    r.label = e.labels[i];
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<AttentionRecord> load_records(const DumpManifest& m) {
  std::vector<AttentionRecord> out;
  for (const auto& e : m.examples) {
    auto records = to_records(e, read_example_dump(m, e));
    std::move(records.begin(), records.end(), std::back_inserter(out));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct ManifestSplits {
  DumpManifest train, val, test;
};

/// Example-level split: Fisher-Yates shuffle by seed, then the first
/// round(train * n) examples train, the next round(val * n) validate, the
/// rest test. Each split keeps manifest order.
inline ManifestSplits split_dataset(const DumpManifest& m, SplitRatios ratios, std::uint64_t seed) {
  for (double r : {ratios.train, ratios.val, ratios.test})
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("split ratios must lie in [0, 1]");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

  const std::size_t n = m.examples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const auto n_train = std::min(n, static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n))));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n))));

  std::vector<int> which(n, 2);
  for (std::size_t i = 0; i < n; ++i) which[order[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);

  ManifestSplits out{m, m, m};
  out.train.examples.clear();
  out.val.examples.clear();
  out.test.examples.clear();
  for (std::size_t i = 0; i < n; ++i) {
    DumpManifest& target = which[i] == 0 ? out.train : (which[i] == 1 ? out.val : out.test);
    target.examples.push_back(m.examples[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature files

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError(where + ": cannot parse number '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace detail

inline std::string feature_meta_path(const std::string& csv_path) { return csv_path + ".meta.json"; }

/// Writes the CSV and its sidecar; `extra` is merged into the sidecar JSON.
inline void write_features(const std::string& path, const FeatureMatrix& m, const json& extra = json::object()) {
  m.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "example_id,step_index,label";
  for (std::size_t c = 0; c < m.width(); ++c) out << ",f_" << c;
  out << '\n';
  for (const auto& r : m.rows) {
    if (r.example_id.find_first_of(",\"\n\r") != std::string::npos) {
      throw DataError("example id '" + r.example_id + "' contains a character not allowed in feature CSV");
    }
    out << r.example_id << ',' << r.step_index << ',' << r.label;
    for (double v : r.values) out << ',' << detail::format_double(v);
    out << '\n';
  }
  if (!out) throw DataError("failed writing '" + path + "'");

  json meta = {{"format_version", kFeatureFormatVersion},
               {"layout", to_json_value(m.layout)},
               {"operator_config", to_json_value(m.config)},
               {"window", m.window},
               {"granularity", m.window > 1 ? "span" : "token"},
               {"rows", m.rows.size()}};
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  write_json_file(feature_meta_path(path), meta);
}

inline FeatureMatrix read_features(const std::string& path) {
  const json meta = read_json_file(feature_meta_path(path));
  FeatureMatrix m;
  try {
    if (meta.at("format_version").get<int>() != kFeatureFormatVersion) {
      throw DataError("'" + feature_meta_path(path) + "': unsupported feature format version");
    }
    m.layout = feature_layout_from_json(meta.at("layout"));
    m.config = spectral_config_from_json(meta.at("operator_config"));
    m.window = meta.at("window").get<int>();
  } catch (const json::exception& e) {
    throw DataError("'" + feature_meta_path(path) + "': " + e.what());
  }

  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "': missing header row");
  const std::size_t width = m.width();
  const auto header = detail::split_csv_line(line);
  if (header.size() != width + 3 || header[0] != "example_id" || header[1] != "step_index" || header[2] != "label") {
    throw StructuralError("'" + path + "': header has " + std::to_string(header.size()) + " columns, layout " +
                          m.layout.describe() + " expects " + std::to_string(width + 3));
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (cells.size() != width + 3) {
      throw StructuralError(where + ": " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(width + 3));
    }
    FeatureVector v;
    v.example_id = std::string(cells[0]);
    v.step_index = static_cast<int>(detail::parse_double(cells[1], where));
    v.label = static_cast<int>(detail::parse_double(cells[2], where));
    if (v.label != 0 && v.label != 1) throw DataError(where + ": label must be 0 or 1");
    v.values.reserve(width);
    for (std::size_t c = 0; c < width; ++c) {
      const double x = detail::parse_double(cells[c + 3], where);
      if (!std::isfinite(x)) throw DataError(where + ": non-finite feature f_" + std::to_string(c));
      v.values.push_back(x);
    }
    m.rows.push_back(std::move(v));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Synthetic attention data

/// Grounded tokens get smooth attention rows: a Gaussian random walk smoothed
/// by a centred moving average of smooth_kernel_width, exponentiated and
/// normalized to unit mass. A hallucinated token gets, on every head, the same
/// kind of base row plus an alternating-sign perturbation on a random
/// contiguous segment (a quarter of the row, at least 4 positions). The
/// perturbation is jag_amplitude * head_gain * (1 / row length), where
/// head_gain in [0.2, 1] is fixed per head and seed, so heads differ in how
/// informative they are. Rows are clamped at 0 and renormalized.
struct SyntheticSpec {
  int n_examples = 100;
  int context_len = 32;
  int gen_len = 32;
  int num_layers = 4;
  int num_heads = 4;
  double halluc_rate = 0.1;
  int smooth_kernel_width = 5;
  double jag_amplitude = 1.0;
  std::uint64_t seed = 0;
  std::string model_name = "synthetic";

  void validate() const {
    if (n_examples < 1 || context_len < 1 || gen_len < 1 || num_layers < 1 || num_heads < 1) {
      throw ConfigError("synthetic spec: counts and dimensions must be >= 1");
    }
    if (!(halluc_rate > 0.0 && halluc_rate < 1.0)) throw ConfigError("synthetic spec: halluc_rate must lie in (0, 1)");
    if (smooth_kernel_width < 1) throw ConfigError("synthetic spec: smooth_kernel_width must be >= 1");
    if (!(jag_amplitude >= 0.0) || !std::isfinite(jag_amplitude)) {
      throw ConfigError("synthetic spec: jag_amplitude must be finite and >= 0");
    }
  }
};

struct SyntheticExample {
  ManifestExample entry;
  AttentionDump dump;
};

namespace detail {

enum SyntheticStream : std::uint64_t { kLabelStream = 1, kRowStream = 2, kGainStream = 3 };

inline double head_gain(const SyntheticSpec& spec, int layer, int head) {
  Rng rng(derive_seed(derive_seed(spec.seed, kGainStream),
                      static_cast<std::uint64_t>(layer) * 1000003ULL + static_cast<std::uint64_t>(head)));
  return 0.2 + 0.8 * rng.uniform();
}

inline std::vector<double> synthetic_row(const SyntheticSpec& spec, std::size_t length, bool hallucinated,
                                         double gain, Rng& rng) {
  std::vector<double> walk(length);
  double level = 0.0;
  for (double& w : walk) {
    level += 0.35 * rng.normal();
    w = level;
  }
  const auto width = static_cast<std::size_t>(spec.smooth_kernel_width);
  std::vector<double> row(length);
  for (std::size_t p = 0; p < length; ++p) {
    const std::size_t lo = p >= width / 2 ? p - width / 2 : 0;
    const std::size_t hi = std::min(length, lo + width);
    double s = 0.0;
    for (std::size_t q = lo; q < hi; ++q) s += walk[q];
    row[p] = std::exp(s / static_cast<double>(hi - lo));
  }
  double total = std::accumulate(row.begin(), row.end(), 0.0);
  for (double& v : row) v /= total;

  if (hallucinated && spec.jag_amplitude > 0.0) {
    const std::size_t seg = std::min(length, std::max<std::size_t>(4, length / 4));
    const std::size_t start = static_cast<std::size_t>(rng.below(length - seg + 1));
    const double amp = spec.jag_amplitude * gain / static_cast<double>(length);
    for (std::size_t p = start; p < start + seg; ++p) row[p] += (p % 2 == 0 ? amp : -amp);
    for (double& v : row) v = std::max(v, 0.0);
    total = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= total;
  }
  return row;
}

}  // namespace detail

inline SyntheticExample synthesize_example(const SyntheticSpec& spec, int index) {
  spec.validate();
  SyntheticExample ex;
  ex.entry.id = "ex" + std::to_string(index);
  ex.entry.context_len = spec.context_len;
  ex.entry.gen_len = spec.gen_len;
  ex.entry.attention_file = ex.entry.id + ".attn";
  const std::uint64_t example_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(index));

  Rng label_rng(derive_seed(example_seed, detail::kLabelStream));
  for (int i = 0; i < spec.gen_len; ++i) ex.entry.labels.push_back(label_rng.uniform() < spec.halluc_rate ? 1 : 0);

  AttentionDump& d = ex.dump;
  d.context_len = static_cast<std::uint32_t>(spec.context_len);
  d.gen_len = static_cast<std::uint32_t>(spec.gen_len);
  d.num_layers = static_cast<std::uint32_t>(spec.num_layers);
  d.num_heads = static_cast<std::uint32_t>(spec.num_heads);
  Rng row_rng(derive_seed(example_seed, detail::kRowStream));
  for (int i = 1; i <= spec.gen_len; ++i) {
    const std::size_t length = static_cast<std::size_t>(spec.context_len + i - 1);
    std::vector<float> step;
    step.reserve(d.step_floats(static_cast<std::size_t>(i)));
    const bool hallucinated = ex.entry.labels[static_cast<std::size_t>(i - 1)] == 1;
    for (int l = 1; l <= spec.num_layers; ++l) {
      for (int h = 1; h <= spec.num_heads; ++h) {
        const auto row = detail::synthetic_row(spec, length, hallucinated, detail::head_gain(spec, l, h), row_rng);
        for (double v : row) step.push_back(static_cast<float>(v));
      }
    }
    d.steps.push_back(std::move(step));
  }
  return ex;
}

/// Writes <out_dir>/manifest.json and one binary dump per example.
inline DumpManifest generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create '" + out_dir.string() + "': " + ec.message());
  DumpManifest m;
  m.model_name = spec.model_name;
  m.dims = {spec.num_layers, spec.num_heads};
  m.base_dir = out_dir;
  for (int i = 0; i < spec.n_examples; ++i) {
    SyntheticExample ex = synthesize_example(spec, i);
    write_dump((out_dir / ex.entry.attention_file).string(), ex.dump);
    m.examples.push_back(std::move(ex.entry));
  }
  write_manifest((out_dir / "manifest.json").string(), m);
  return m;
}

}  // namespace attnspec
