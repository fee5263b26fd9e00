#pragma once

// JSON forms of configs, layouts, models and reports.
// Doubles go through nlohmann::json's shortest round-trip formatting, so
// every stored real reads back bit-identical.

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "attnspec/classifier.hpp"
#include "attnspec/error.hpp"
#include "attnspec/features.hpp"
#include "attnspec/metrics.hpp"
#include "attnspec/signal_ops.hpp"

namespace attnspec {

using json = nlohmann::json;

inline constexpr int kLayoutVersion = 1;
inline constexpr int kModelFormatVersion = 1;
inline constexpr int kFeatureFormatVersion = 1;

inline json to_json_value(const SpectralConfig& c) {
  return {{"operator", to_string(c.op)},
          {"fourier_cutoff", c.fourier_cutoff},
          {"wavelet_padding", to_string(c.wavelet_padding)},
          {"wavelet_levels", c.wavelet_levels},
          {"laplacian_boundary", to_string(c.laplacian_boundary)}};
}

inline SpectralConfig spectral_config_from_json(const json& j) {
  SpectralConfig c;
  c.op = parse_operator(j.at("operator").get<std::string>());
  c.fourier_cutoff = j.at("fourier_cutoff").get<double>();
  c.wavelet_padding = parse_padding(j.at("wavelet_padding").get<std::string>());
  c.wavelet_levels = j.at("wavelet_levels").get<int>();
  c.laplacian_boundary = parse_boundary(j.at("laplacian_boundary").get<std::string>());
  c.validate();
  return c;
}

inline json to_json_value(const FeatureLayout& layout) {
  json heads = json::array();
  for (const auto& id : layout.heads) heads.push_back({id.layer, id.head});
  return {{"layout_version", kLayoutVersion},
          {"num_layers", layout.dims.num_layers},
          {"num_heads", layout.dims.num_heads},
          {"heads", heads},
          {"has_ctx", layout.has_ctx},
          {"has_gen", layout.has_gen}};
}

inline FeatureLayout feature_layout_from_json(const json& j) {
  if (j.at("layout_version").get<int>() != kLayoutVersion) {
    throw DataError("unsupported layout version " + j.at("layout_version").dump());
  }
  FeatureLayout layout;
  layout.dims = {j.at("num_layers").get<int>(), j.at("num_heads").get<int>()};
  for (const auto& h : j.at("heads")) layout.heads.push_back({h.at(0).get<int>(), h.at(1).get<int>()});
  layout.has_ctx = j.at("has_ctx").get<bool>();
  layout.has_gen = j.at("has_gen").get<bool>();
  return layout;
}

inline json to_json_value(const LinearModel& m) {
  return {{"format_version", kModelFormatVersion},
          {"layout", to_json_value(m.layout)},
          {"operator_config", to_json_value(m.config)},
          {"window", m.window},
          {"weights", m.weights},
          {"bias", m.bias},
          {"feature_means", m.feature_means},
          {"feature_stds", m.feature_stds},
          {"threshold", m.threshold},
          {"training",
           {{"l2_lambda", m.l2_lambda},
            {"max_iter", m.max_iter},
            {"tol", m.tol},
            {"converged", m.converged},
            {"iterations_used", m.iterations_used},
            {"n_train", m.n_train}}}};
}

inline LinearModel linear_model_from_json(const json& j) {
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw DataError("unsupported model format version " + j.at("format_version").dump());
    }
    LinearModel m;
    m.layout = feature_layout_from_json(j.at("layout"));
    m.config = spectral_config_from_json(j.at("operator_config"));
    m.window = j.at("window").get<int>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.feature_means = j.at("feature_means").get<std::vector<double>>();
    m.feature_stds = j.at("feature_stds").get<std::vector<double>>();
    m.threshold = j.at("threshold").get<double>();
    const json& t = j.at("training");
    m.l2_lambda = t.at("l2_lambda").get<double>();
    m.max_iter = t.at("max_iter").get<int>();
    m.tol = t.at("tol").get<double>();
    m.converged = t.at("converged").get<bool>();
    m.iterations_used = t.at("iterations_used").get<int>();
    m.n_train = t.at("n_train").get<std::size_t>();
    const std::size_t d = m.layout.width();
    if (m.weights.size() != d || m.feature_means.size() != d || m.feature_stds.size() != d) {
      throw StructuralError("model vectors do not match layout width " + std::to_string(d));
    }
    for (double s : m.feature_stds)
      if (!(s > 0.0)) throw DataError("model feature_stds must be positive");
    return m;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model JSON: ") + e.what());
  }
}

inline json to_json_value(const EvalReport& r) {
  json j = {{"f1", r.f1},
            {"precision", r.precision},
            {"recall", r.recall},
            {"auroc", r.auroc ? json(*r.auroc) : json(nullptr)},
            {"n_pos", r.n_pos},
            {"n_neg", r.n_neg},
            {"tp", r.confusion.tp},
            {"fp", r.confusion.fp},
            {"tn", r.confusion.tn},
            {"fn", r.confusion.fn},
            {"threshold_used", r.threshold_used},
            {"granularity", to_string(r.granularity)},
            {"operator_config", to_json_value(r.operator_config)}};
  return j;
}

/// FNV-1a 64 of a canonical JSON dump; used as a config fingerprint.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing '" + path + "'");
}

inline void save_model(const std::string& path, const LinearModel& m, const json& extra = json::object()) {
  json j = to_json_value(m);
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_json_file(path, j);
}

inline LinearModel load_model(const std::string& path) { return linear_model_from_json(read_json_file(path)); }

}  // namespace attnspec
