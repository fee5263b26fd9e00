#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "attnspec/data_io.hpp"

#ifndef ATTNSPEC_CLI_PATH
#error "ATTNSPEC_CLI_PATH must point at the attnspec binary"
#endif

using namespace attnspec;
namespace fs = std::filesystem;

namespace {

const fs::path& workdir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "attnspec_cli_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string at(const std::string& leaf) { return (workdir() / leaf).string(); }

int run(const std::string& args) {
  const std::string cmd = std::string(ATTNSPEC_CLI_PATH) + " " + args + " > " + at("last.out") + " 2> " + at("last.err");
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

std::size_t count(const std::string& s, char c) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), c)); }

// Shared planted dataset: generated once, extracted into train/val/test.
void ensure_planted() {
  static bool done = false;
  if (done) return;
  ASSERT_EQ(run("gen-synth --out-dir " + at("planted") +
                " --n-examples 80 --context-len 16 --gen-len 16 --layers 2 --heads 2 --halluc-rate 0.2 --seed 5"),
            0);
  for (const char* split : {"train", "val", "test"}) {
    ASSERT_EQ(run("extract --manifest " + at("planted/manifest.json") + " --split " + split + " --out " +
                  at(std::string("planted_") + split + ".csv")),
              0);
    ASSERT_EQ(run("extract --manifest " + at("planted/manifest.json") + " --operator fourier-low --split " + split +
                  " --out " + at(std::string("low_") + split + ".csv")),
              0);
  }
  done = true;
}

}  // namespace

TEST(Cli, MinimalDumpGivesOneRowTwoColumns) {
  const fs::path dir = workdir() / "minimal";
  fs::create_directories(dir);
  write_dump((dir / "m.attn").string(), AttentionDump{1, 1, 1, 1, {{0.75f}}});
  DumpManifest m;
  m.model_name = "tiny";
  m.dims = {1, 1};
  m.examples.push_back({"only", 1, 1, {1}, "m.attn"});
  write_manifest((dir / "manifest.json").string(), m);
  EXPECT_EQ(fs::file_size(dir / "m.attn"), 28u);

  ASSERT_EQ(run("extract --manifest " + (dir / "manifest.json").string() + " --out " + at("minimal.csv")), 0);
  const auto rows = lines(at("minimal.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], "example_id,step_index,label,f_0,f_1");
  EXPECT_EQ(rows[1], "only,1,1,0,0");
  const auto meta = read_json_file(at("minimal.csv.meta.json"));
  EXPECT_EQ(meta.at("operator_config").at("fourier_cutoff"), 0.45);
  EXPECT_TRUE(meta.at("reproducibility").contains("config_hash"));
  EXPECT_TRUE(meta.at("reproducibility").contains("format_versions"));
}

TEST(Cli, ExtractIsDeterministicAndSpanDefaultsToEight) {
  ensure_planted();
  ASSERT_EQ(run("extract --manifest " + at("planted/manifest.json") + " --split train --out " + at("again.csv")), 0);
  EXPECT_EQ(slurp(at("again.csv")), slurp(at("planted_train.csv")));
  EXPECT_EQ(slurp(at("again.csv.meta.json")), slurp(at("planted_train.csv.meta.json")));

  ASSERT_EQ(run("extract --manifest " + at("planted/manifest.json") + " --span --operator wavelet --out " +
                at("span.csv")),
            0);
  const auto meta = read_json_file(at("span.csv.meta.json"));
  EXPECT_EQ(meta.at("window"), 8);
  EXPECT_EQ(meta.at("granularity"), "span");
  EXPECT_EQ(meta.at("operator_config").at("wavelet_padding"), "symmetric");
  EXPECT_EQ(lines(at("span.csv")).size(), 1u + 80u * 2u);
}

TEST(Cli, TrainIsDeterministicAndConverges) {
  ensure_planted();
  const std::string base = "train --features " + at("planted_train.csv") + " --val-features " + at("planted_val.csv");
  ASSERT_EQ(run(base + " --out-model " + at("model_a.json")), 0);
  ASSERT_EQ(run(base + " --out-model " + at("model_b.json")), 0);
  EXPECT_EQ(slurp(at("model_a.json")), slurp(at("model_b.json")));
  const auto model = read_json_file(at("model_a.json"));
  EXPECT_EQ(model.at("training").at("converged"), true);
  EXPECT_EQ(model.at("training").at("max_iter"), 1000);
  EXPECT_EQ(model.at("threshold_selection").at("source"), "validation");
}

TEST(Cli, EvalReportIsConsistentAndHighBeatsLow) {
  ensure_planted();
  ASSERT_EQ(run("train --features " + at("planted_train.csv") + " --val-features " + at("planted_val.csv") +
                " --out-model " + at("high.json")),
            0);
  ASSERT_EQ(run("train --features " + at("low_train.csv") + " --val-features " + at("low_val.csv") +
                " --out-model " + at("low.json")),
            0);
  ASSERT_EQ(run("eval --model " + at("high.json") + " --features " + at("planted_test.csv") + " --report " +
                at("high_report.json")),
            0);
  ASSERT_EQ(run("eval --model " + at("low.json") + " --features " + at("low_test.csv") + " --report " +
                at("low_report.json")),
            0);
  const auto high = read_json_file(at("high_report.json"));
  const auto low = read_json_file(at("low_report.json"));
  EXPECT_GT(high.at("auroc").get<double>(), low.at("auroc").get<double>());

  const double tp = high.at("tp"), fp = high.at("fp"), fn = high.at("fn");
  const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0, r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  EXPECT_DOUBLE_EQ(high.at("precision").get<double>(), p);
  EXPECT_DOUBLE_EQ(high.at("recall").get<double>(), r);
  EXPECT_DOUBLE_EQ(high.at("f1").get<double>(), p + r > 0 ? 2 * p * r / (p + r) : 0.0);
  EXPECT_EQ(high.at("n_pos").get<double>(), tp + fn);
  EXPECT_NE(slurp(at("last.out")).find("auroc"), std::string::npos);
}

TEST(Cli, EvalOnSeparableTrainingDataIsPerfect) {
  const fs::path dir = workdir() / "separable";
  fs::create_directories(dir);
  DumpManifest m;
  m.model_name = "sep";
  m.dims = {1, 1};
  // ctx length 4: positives alternate sharply, negatives are flat.
  for (int i = 0; i < 10; ++i) {
    const bool pos = i % 2 == 0;
    const float a = pos ? 0.4f + 0.01f * static_cast<float>(i) : 0.25f, b = 0.5f - a;
    write_dump((dir / ("e" + std::to_string(i) + ".attn")).string(), AttentionDump{4, 1, 1, 1, {{a, b, a, b}}});
    m.examples.push_back({"e" + std::to_string(i), 4, 1, {pos ? 1 : 0}, "e" + std::to_string(i) + ".attn"});
  }
  write_manifest((dir / "manifest.json").string(), m);
  ASSERT_EQ(run("extract --manifest " + (dir / "manifest.json").string() + " --out " + at("sep.csv")), 0);
  ASSERT_EQ(run("train --features " + at("sep.csv") + " --out-model " + at("sep.json")), 0);
  ASSERT_EQ(run("eval --model " + at("sep.json") + " --features " + at("sep.csv") + " --report " + at("sep_r.json")),
            0);
  EXPECT_EQ(read_json_file(at("sep_r.json")).at("auroc"), 1.0);
}

TEST(Cli, AblateCardinalities) {
  ensure_planted();
  const std::string base = "ablate --manifest " + at("planted/manifest.json");
  ASSERT_EQ(run(base + " --band-sweep --out " + at("bands.csv")), 0);
  const auto bands = lines(at("bands.csv"));
  ASSERT_EQ(bands.size(), 4u);
  EXPECT_EQ(bands[0].rfind("variant,f1,auroc,n_pos,n_neg", 0), 0u);
  ASSERT_EQ(run(base + " --cutoff-sweep --out " + at("cutoffs.csv")), 0);
  EXPECT_EQ(lines(at("cutoffs.csv")).size(), 11u);
  ASSERT_EQ(run(base + " --cutoffs 0.1,0.45 --cutoff-sweep --out " + at("two.csv")), 0);
  EXPECT_EQ(lines(at("two.csv")).size(), 3u);
  ASSERT_EQ(run(base + " --out " + at("baseline.csv")), 0);
  EXPECT_EQ(lines(at("baseline.csv")).size(), 2u);
  EXPECT_TRUE(fs::exists(at("baseline.csv.meta.json")));
}

TEST(Cli, AnalyzeWritesAllTables) {
  ensure_planted();
  ASSERT_EQ(run("analyze --manifest " + at("planted/manifest.json") + " --top-k 100,50,2 --out-dir " + at("analysis")),
            0);
  const auto layers = lines(at("analysis/layer_importance.csv"));
  ASSERT_EQ(layers.size(), 3u);
  EXPECT_EQ(layers[0], "layer,mean_importance,std_importance,granularity");
  EXPECT_EQ(lines(at("analysis/layer_importance_raw.csv")).size(), 3u);
  EXPECT_EQ(lines(at("analysis/head_importance.csv")).size(), 5u);
  EXPECT_EQ(lines(at("analysis/top_k.csv")).size(), 5u);  // all + three k values
  EXPECT_EQ(lines(at("analysis/attention_type.csv")).size(), 4u);
  const auto summary = read_json_file(at("analysis/analyze.json"));
  EXPECT_EQ(summary.at("top_heads").size(), 4u);
}

TEST(Cli, ToySimCsv) {
  ASSERT_EQ(run("toy-sim --k-sweep 2,4,8,16 --trials 300 --seed 3 --out " + at("toy.csv")), 0);
  const auto rows = lines(at("toy.csv"));
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0],
            "K,t,tau,delta,trials,mean_roughness,std_error,switch_prob_est,logit_energy_est,logit_energy_bound");
  EXPECT_EQ(rows[1].rfind("2,64,0.5,2,300,", 0), 0u);
  EXPECT_EQ(count(rows[4], ','), 9u);
  const std::string first = slurp(at("toy.csv"));
  ASSERT_EQ(run("--threads 1 toy-sim --k-sweep 2,4,8,16 --trials 300 --seed 3 --out " + at("toy.csv")), 0);
  EXPECT_EQ(slurp(at("toy.csv")), first);
}

TEST(Cli, ConfigFileAndFlagPrecedence) {
  ensure_planted();
  {
    std::ofstream cfg(at("opts.toml"));
    cfg << "[extract]\ncutoff = 0.3\noperator = \"fourier-high\"\n";
  }
  const std::string base = "--config " + at("opts.toml") + " extract --manifest " + at("planted/manifest.json");
  ASSERT_EQ(run(base + " --out " + at("cfg1.csv")), 0);
  EXPECT_EQ(read_json_file(at("cfg1.csv.meta.json")).at("operator_config").at("fourier_cutoff"), 0.3);
  ASSERT_EQ(run(base + " --cutoff 0.2 --out " + at("cfg2.csv")), 0);
  EXPECT_EQ(read_json_file(at("cfg2.csv.meta.json")).at("operator_config").at("fourier_cutoff"), 0.2);
}

TEST(Cli, ExitCodes) {
  ensure_planted();
  EXPECT_EQ(run("--help"), 0);
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("extract --manifest " + at("planted/manifest.json") + " --cutoff 0.7 --out " + at("x.csv")), 2);
  EXPECT_EQ(run("extract --manifest " + at("planted/manifest.json") + " --operator nope --out " + at("x.csv")), 2);
  EXPECT_EQ(run("extract --manifest " + at("missing.json") + " --out " + at("x.csv")), 3);

  // single-class training data
  {
    std::ofstream out(at("one_class.csv"));
    std::ifstream in(at("planted_train.csv"));
    std::string line;
    std::getline(in, line);
    out << line << '\n';
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      cells[2] = "0";
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
      out << '\n';
    }
  }
  fs::copy_file(at("planted_train.csv.meta.json"), at("one_class.csv.meta.json"), fs::copy_options::overwrite_existing);
  EXPECT_EQ(run("train --features " + at("one_class.csv") + " --out-model " + at("x.json")), 3);

  // model/feature layout mismatch
  ASSERT_EQ(run("train --features " + at("planted_train.csv") + " --out-model " + at("full.json")), 0);
  ASSERT_EQ(run("extract --manifest " + at("minimal/manifest.json") + " --out " + at("tiny.csv")), 0);
  EXPECT_EQ(run("eval --model " + at("full.json") + " --features " + at("tiny.csv")), 4);
  const std::string err = slurp(at("last.err"));
  EXPECT_EQ(run("train --features " + at("planted_train.csv") + " --val-features " + at("low_val.csv") +
                " --out-model " + at("x.json")),
            4);
  EXPECT_NE(err.find("L=2"), std::string::npos) << err;
  EXPECT_NE(err.find("L=1"), std::string::npos) << err;
}
