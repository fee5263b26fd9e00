#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "attnspec/data_io.hpp"
#include "attnspec/evaluation.hpp"
#include "oracles.hpp"

using namespace attnspec;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("attnspec_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  std::string operator/(const std::string& leaf) const { return (path_ / leaf).string(); }

 private:
  fs::path path_;
};

AttentionDump random_dump(std::mt19937_64& rng, std::uint32_t n, std::uint32_t t, std::uint32_t l, std::uint32_t h) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  AttentionDump d{n, t, l, h, {}};
  for (std::uint32_t i = 1; i <= t; ++i) {
    std::vector<float> step(d.step_floats(i));
    for (float& v : step) v = u(rng) / static_cast<float>(n + i);
    d.steps.push_back(std::move(step));
  }
  return d;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

DumpManifest manifest_of(int n) {
  DumpManifest m;
  m.model_name = "m";
  m.dims = {1, 1};
  for (int i = 0; i < n; ++i) m.examples.push_back({"e" + std::to_string(i), 2, 1, {0}, "e.attn"});
  return m;
}

template <typename Fn>
void expect_dump_error(DumpErrorKind kind, Fn fn, const std::string& fragment = "") {
  try {
    fn();
    FAIL() << "no error";
  } catch (const DumpError& e) {
    EXPECT_EQ(e.dump_kind(), kind) << e.what();
    if (!fragment.empty()) {
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  }
}

}  // namespace

// --- dumps ------------------------------------------------------------------

TEST(Dump, MinimalFileSize) {
  const AttentionDump d{1, 1, 1, 1, {{0.5f}}};
  EXPECT_EQ(d.file_size(), 28u);
  EXPECT_EQ(encode_dump(d).size(), 28u);
  const std::string bytes = encode_dump(d);
  EXPECT_EQ(bytes.substr(0, 4), "ATTN");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);  // version, little-endian
}

TEST(Dump, SizeFormula) {
  std::mt19937_64 rng(41);
  const auto d = random_dump(rng, 5, 4, 2, 3);
  std::size_t floats = 0;
  for (std::size_t i = 1; i <= 4; ++i) floats += 2 * 3 * (5 + i - 1);
  EXPECT_EQ(encode_dump(d).size(), 24 + 4 * floats);
}

TEST(Dump, BitwiseRoundTrip) {
  std::mt19937_64 rng(42);
  TempDir dir("dump_roundtrip");
  for (int rep = 0; rep < 5; ++rep) {
    auto d = random_dump(rng, 1 + rep, 1 + 2 * rep, 1 + rep % 2, 2);
    d.steps[0][0] = std::numeric_limits<float>::denorm_min();
    const std::string path = dir / ("d" + std::to_string(rep) + ".attn");
    write_dump(path, d);
    const auto back = read_dump(path);
    ASSERT_EQ(back.steps.size(), d.steps.size());
    for (std::size_t i = 0; i < d.steps.size(); ++i) {
      ASSERT_EQ(back.steps[i].size(), d.steps[i].size());
      EXPECT_EQ(std::memcmp(back.steps[i].data(), d.steps[i].data(), 4 * d.steps[i].size()), 0);
    }
    EXPECT_TRUE(back == d);
  }
}

TEST(Dump, TruncatedByOneByte) {
  std::mt19937_64 rng(43);
  const auto d = random_dump(rng, 3, 2, 1, 2);
  std::string bytes = encode_dump(d);
  const std::size_t full = bytes.size();
  bytes.pop_back();
  expect_dump_error(DumpErrorKind::SizeMismatch, [&] { decode_dump(bytes); },
                    "expected " + std::to_string(full) + " bytes");
  expect_dump_error(DumpErrorKind::SizeMismatch, [&] { decode_dump(bytes.substr(0, 10)); });
}

TEST(Dump, BadMagicAndVersion) {
  std::mt19937_64 rng(44);
  std::string bytes = encode_dump(random_dump(rng, 2, 2, 1, 1));
  std::string bad = bytes;
  bad[0] = 'X';
  expect_dump_error(DumpErrorKind::BadMagic, [&] { decode_dump(bad); }, "offset 0");
  std::string version = bytes;
  version[4] = 2;
  expect_dump_error(DumpErrorKind::VersionMismatch, [&] { decode_dump(version); }, "offset 4");
}

TEST(Dump, InvalidFloats) {
  std::mt19937_64 rng(45);
  std::string bytes = encode_dump(random_dump(rng, 2, 2, 1, 1));
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::string with_nan = bytes;
  std::memcpy(with_nan.data() + 28, &nan, 4);
  expect_dump_error(DumpErrorKind::InvalidValue, [&] { decode_dump(with_nan); }, "offset 28");
  const float neg = -0.25f;
  std::string with_neg = bytes;
  std::memcpy(with_neg.data() + 24, &neg, 4);
  expect_dump_error(DumpErrorKind::InvalidValue, [&] { decode_dump(with_neg); }, "offset 24");
}

TEST(Dump, JsonFixtureFormat) {
  TempDir dir("dump_json");
  const std::string path = dir / "fixture.json";
  {
    std::ofstream out(path);
    out << R"({"format_version": 1, "context_len": 2, "gen_len": 2, "num_layers": 1, "num_heads": 1,
              "steps": [ [[[0.5, 0.5]]], [[[0.25, 0.25, 0.5]]] ]})";
  }
  const auto d = read_dump(path);
  EXPECT_EQ(d.steps[1], (std::vector<float>{0.25f, 0.25f, 0.5f}));
  std::mt19937_64 rng(46);
  const auto r = random_dump(rng, 3, 3, 2, 2);
  write_dump(dir / "r.json", r);
  EXPECT_TRUE(read_dump(dir / "r.json") == r);

  std::ofstream(dir / "short.json") << R"({"format_version": 1, "context_len": 2, "gen_len": 1,
      "num_layers": 1, "num_heads": 1, "steps": [ [[[0.5]]] ]})";
  EXPECT_THROW(read_dump(dir / "short.json"), StructuralError);
}

// --- manifests ----------------------------------------------------------------

TEST(Manifest, ValidationAndRoundTrip) {
  TempDir dir("manifest");
  auto m = manifest_of(3);
  write_manifest(dir / "manifest.json", m);
  const auto back = read_manifest(dir / "manifest.json");
  EXPECT_EQ(back.examples.size(), 3u);
  EXPECT_EQ(back.base_dir, dir.path());

  auto bad_labels = m;
  bad_labels.examples[1].labels = {0, 1};
  EXPECT_THROW(bad_labels.validate(), DataError);
  auto bad_dims = m;
  bad_dims.dims.num_heads = 0;
  EXPECT_THROW(bad_dims.validate(), DataError);
}

TEST(Manifest, HeaderMustAgreeWithDump) {
  TempDir dir("manifest_dump");
  std::mt19937_64 rng(47);
  write_dump(dir / "e.attn", random_dump(rng, 3, 1, 1, 1));
  auto m = manifest_of(1);
  m.base_dir = dir.path();
  EXPECT_THROW(load_records(m), StructuralError);
  m.examples[0].context_len = 3;
  const auto records = load_records(m);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].context_len, 3);
}

// --- splits -----------------------------------------------------------------

TEST(Split, SizesAndPartition) {
  const auto m = manifest_of(100);
  const auto s = split_dataset(m, {}, 7);
  EXPECT_EQ(s.train.examples.size(), 80u);
  EXPECT_EQ(s.val.examples.size(), 10u);
  EXPECT_EQ(s.test.examples.size(), 10u);
}

TEST(Split, PartitionForManySeedsAndRatios) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (auto ratios : {SplitRatios{0.8, 0.1, 0.1}, SplitRatios{0.5, 0.25, 0.25}, SplitRatios{1.0, 0.0, 0.0},
                        SplitRatios{0.34, 0.33, 0.33}}) {
      const auto m = manifest_of(1 + static_cast<int>(seed) * 7);
      const auto s = split_dataset(m, ratios, seed);
      std::multiset<std::string> seen;
      for (const auto* part : {&s.train, &s.val, &s.test})
        for (const auto& e : part->examples) seen.insert(e.id);
      std::multiset<std::string> all;
      for (const auto& e : m.examples) all.insert(e.id);
      EXPECT_EQ(seen, all);
    }
  }
}

TEST(Split, DeterministicBySeed) {
  const auto m = manifest_of(50);
  auto ids = [](const DumpManifest& d) {
    std::vector<std::string> out;
    for (const auto& e : d.examples) out.push_back(e.id);
    return out;
  };
  EXPECT_EQ(ids(split_dataset(m, {}, 3).test), ids(split_dataset(m, {}, 3).test));
  EXPECT_NE(ids(split_dataset(m, {}, 3).test), ids(split_dataset(m, {}, 4).test));
}

TEST(Split, InvalidRatios) {
  const auto m = manifest_of(10);
  EXPECT_THROW(split_dataset(m, {0.8, 0.1, 0.2}, 1), ConfigError);
  EXPECT_THROW(split_dataset(m, {1.2, -0.1, -0.1}, 1), ConfigError);
}

// --- feature files -------------------------------------------------------------

TEST(FeatureFile, ExactRoundTrip) {
  TempDir dir("features");
  std::mt19937_64 rng(48);
  std::vector<AttentionRecord> records;
  for (int s = 1; s <= 6; ++s) {
    AttentionRecord r;
    r.example_id = "x";
    r.step_index = s;
    r.context_len = 5;
    r.dims = {2, 2};
    r.label = s % 2;
    for (std::size_t k = 0; k < 4 * r.row_length(); ++k) r.weights.push_back(0.9 / double(r.row_length()) * (0.5 + 0.5 * oracle::random_signal(rng, 1, 0, 1)[0]));
    records.push_back(r);
  }
  SpectralConfig cfg;
  cfg.op = Operator::WaveletHigh;
  cfg.wavelet_padding = WaveletPadding::Symmetric;
  const auto m = extract_features(records, cfg, {2, 2});
  write_features(dir / "f.csv", m, {{"seed", 9}});
  const auto back = read_features(dir / "f.csv");
  ASSERT_EQ(back.size(), m.size());
  EXPECT_TRUE(back.layout == m.layout);
  EXPECT_TRUE(back.config == m.config);
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(back.rows[i].values, m.rows[i].values);
    EXPECT_EQ(back.rows[i].label, m.rows[i].label);
    EXPECT_EQ(back.rows[i].step_index, m.rows[i].step_index);
  }
  EXPECT_EQ(read_json_file(feature_meta_path(dir / "f.csv")).at("seed"), 9);
  const std::string header = slurp(dir / "f.csv").substr(0, 40);
  EXPECT_EQ(header.rfind("example_id,step_index,label,f_0,f_1", 0), 0u);

  const std::vector<HeadId> heads{{1, 2}};
  const auto sub = drop_attention_type(select_head_subset(m, heads), KeepType::GeneratedOnly);
  write_features(dir / "sub.csv", sub);
  const auto sub_back = read_features(dir / "sub.csv");
  EXPECT_TRUE(sub_back.layout == sub.layout);
  EXPECT_EQ(sub_back.width(), 1u);
}

TEST(FeatureFile, RejectsWrongWidth) {
  TempDir dir("features_bad");
  FeatureMatrix m;
  m.layout = FeatureLayout::full({1, 1});
  m.rows.push_back({{0.5, 0.25}, 1, "a", 1});
  write_features(dir / "f.csv", m);
  std::ofstream(dir / "f.csv", std::ios::app) << "b,1,0,0.5\n";
  EXPECT_THROW(read_features(dir / "f.csv"), StructuralError);
}

// --- synthetic data --------------------------------------------------------------

TEST(Synthetic, ByteIdenticalForSameSpec) {
  TempDir a("synth_a"), b("synth_b");
  SyntheticSpec spec;
  spec.n_examples = 4;
  spec.seed = 11;
  generate_synthetic(spec, a.path());
  generate_synthetic(spec, b.path());
  for (const auto& leaf : {"manifest.json", "ex0.attn", "ex3.attn"}) EXPECT_EQ(slurp(a / leaf), slurp(b / leaf)) << leaf;
  spec.seed = 12;
  TempDir c("synth_c");
  generate_synthetic(spec, c.path());
  EXPECT_NE(slurp(a / "ex0.attn"), slurp(c / "ex0.attn"));
}

TEST(Synthetic, RowsAreValidAttention) {
  SyntheticSpec spec;
  spec.n_examples = 3;
  spec.jag_amplitude = 50.0;
  spec.halluc_rate = 0.5;
  for (int i = 0; i < spec.n_examples; ++i) {
    const auto ex = synthesize_example(spec, i);
    for (const auto& r : to_records(ex.entry, ex.dump)) EXPECT_NO_THROW(r.validate());
  }
}

TEST(Synthetic, NoJagMeansNoSignal) {
  SyntheticSpec spec;
  spec.n_examples = 250;
  spec.gen_len = 16;
  spec.context_len = 16;
  spec.num_layers = 2;
  spec.num_heads = 2;
  spec.halluc_rate = 0.3;
  spec.jag_amplitude = 0.0;
  spec.seed = 13;
  RecordSplits splits;
  splits.dims = {2, 2};
  for (int i = 0; i < spec.n_examples; ++i) {
    const auto ex = synthesize_example(spec, i);
    auto recs = to_records(ex.entry, ex.dump);
    auto& dst = i < 100 ? splits.train : i < 125 ? splits.val : splits.test;
    dst.insert(dst.end(), recs.begin(), recs.end());
  }
  ASSERT_EQ(splits.test.size(), 2000u);
  const auto result = train_and_evaluate(extract_splits(splits, SpectralConfig{}));
  ASSERT_TRUE(result.report.auroc);
  EXPECT_GE(*result.report.auroc, 0.4);
  EXPECT_LE(*result.report.auroc, 0.6);
}

namespace {

// Fourier high-band energy of every (hallucinated, grounded) row pair sharing
// example, step parity neighbourhood, layer and head.
struct PairStats {
  std::size_t wins = 0, pairs = 0;
  double mean_gap = 0.0;
};

PairStats paired_high_band(const SyntheticSpec& spec) {
  PairStats out;
  double gap_sum = 0.0;
  for (int i = 0; i < spec.n_examples; ++i) {
    const auto ex = synthesize_example(spec, i);
    const auto recs = to_records(ex.entry, ex.dump);
    for (std::size_t s = 0; s < recs.size(); ++s) {
      if (recs[s].label != 1) continue;
      // nearest grounded step in the same example
      std::optional<std::size_t> partner;
      for (std::size_t d = 1; d < recs.size() && !partner; ++d) {
        if (s >= d && recs[s - d].label == 0) partner = s - d;
        else if (s + d < recs.size() && recs[s + d].label == 0) partner = s + d;
      }
      if (!partner) continue;
      for (int l = 1; l <= spec.num_layers; ++l) {
        for (int h = 1; h <= spec.num_heads; ++h) {
          const double e_h = signal::fourier_band_energy(recs[s].row(l, h), 0.45, Band::High);
          const double e_g = signal::fourier_band_energy(recs[*partner].row(l, h), 0.45, Band::High);
          out.wins += e_h > e_g;
          out.pairs += 1;
          gap_sum += e_h - e_g;
        }
      }
    }
  }
  out.mean_gap = gap_sum / static_cast<double>(out.pairs);
  return out;
}

}  // namespace

TEST(Synthetic, LargeJagWinsPairedHighBandComparisons) {
  SyntheticSpec spec;
  spec.n_examples = 60;
  spec.smooth_kernel_width = 1;
  spec.jag_amplitude = 40.0;
  spec.halluc_rate = 0.2;
  spec.seed = 14;
  const auto stats = paired_high_band(spec);
  ASSERT_GT(stats.pairs, 500u);
  EXPECT_GE(static_cast<double>(stats.wins) / static_cast<double>(stats.pairs), 0.95)
      << stats.wins << " / " << stats.pairs;
}

TEST(Synthetic, GapGrowsWithAmplitude) {
  SyntheticSpec spec;
  spec.n_examples = 40;
  spec.halluc_rate = 0.2;
  spec.seed = 15;
  double prev = -1.0;
  for (double amp : {0.5, 2.0, 8.0}) {
    spec.jag_amplitude = amp;
    const double gap = paired_high_band(spec).mean_gap;
    EXPECT_GE(gap, prev) << amp;
    prev = gap;
  }
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec spec;
  spec.halluc_rate = 1.0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.smooth_kernel_width = 0;
  EXPECT_THROW(spec.validate(), ConfigError);
  spec = {};
  spec.jag_amplitude = -1.0;
  EXPECT_THROW(spec.validate(), ConfigError);
}
