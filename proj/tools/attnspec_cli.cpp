// attnspec command-line driver.
//
//   attnspec gen-synth  --out-dir DIR [--n-examples ...]
//   attnspec extract    --manifest M --out F.csv [--operator fourier --cutoff 0.45 ...]
//   attnspec train      --features F.csv [--val-features V.csv] --out-model M.json
//   attnspec eval       --model M.json --features F.csv [--report R.json]
//   attnspec ablate     --manifest M --out T.csv [--band-sweep] [--cutoff-sweep] [--type-ablation] [--top-k ...]
//   attnspec analyze    --manifest M --out-dir DIR [--top-k 100,50,10]
//   attnspec toy-sim    --out C.csv [--k-sweep 1,2,4,8,16 --t 64 --tau 0.5 --delta 2 --trials 10000]
//
// Exit codes: 0 ok, 1 unexpected, 2 config, 3 data, 4 structural, 5 numeric.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "attnspec/attnspec.hpp"

namespace fs = std::filesystem;
using namespace attnspec;

namespace {

std::string fmt10(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt10(const std::optional<double>& v) { return v ? fmt10(*v) : std::string{}; }

json reproducibility(const std::string& subcommand, const json& config, std::uint64_t seed) {
  return {{"tool", "attnspec"},
          {"subcommand", subcommand},
          {"seed", seed},
          {"config", config},
          {"config_hash", hex64(fnv1a64(config.dump()))},
          {"format_versions",
           {{"dump", kDumpFormatVersion},
            {"manifest", kManifestFormatVersion},
            {"layout", kLayoutVersion},
            {"model", kModelFormatVersion},
            {"features", kFeatureFormatVersion}}}};
}

std::ofstream open_out(const std::string& path) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) {
    std::error_code ec;
    fs::create_directories(parent, ec);
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw DataError("failed writing '" + path + "'");
}

// --- shared flag groups ---------------------------------------------------------

struct OperatorFlags {
  std::string op = "fourier";
  double cutoff = 0.45;
  std::string padding;  // empty: zero for tokens, symmetric for spans
  int levels = 1;
  std::string boundary = "interior";

  void add(CLI::App* app) {
    app->add_option("--operator", op,
                    "fourier|fourier-high|fourier-low|fourier-full|wavelet|laplacian|entropy|variance")
        ->capture_default_str();
    app->add_option("--cutoff", cutoff, "Fourier normalized cutoff in [0, 0.5]")->capture_default_str();
    app->add_option("--padding", padding, "wavelet padding: zero|symmetric|periodic (default zero, symmetric for spans)");
    app->add_option("--levels", levels, "wavelet decomposition levels")->capture_default_str();
    app->add_option("--boundary", boundary, "Laplacian boundary: interior|circular")->capture_default_str();
  }

  SpectralConfig config(int window) const {
    SpectralConfig c;
    c.op = parse_operator(op);
    c.fourier_cutoff = cutoff;
    c.wavelet_padding = padding.empty() ? (window > 1 ? WaveletPadding::Symmetric : WaveletPadding::Zero)
                                        : parse_padding(padding);
    c.wavelet_levels = levels;
    c.laplacian_boundary = parse_boundary(boundary);
    c.validate();
    return c;
  }
};

struct SplitFlags {
  std::string manifest;
  std::uint64_t split_seed = 0;
  std::vector<double> ratios{0.8, 0.1, 0.1};

  void add(CLI::App* app, bool required_manifest = true) {
    auto* m = app->add_option("--manifest", manifest, "dump manifest JSON");
    if (required_manifest) m->required();
    app->add_option("--split-seed", split_seed, "example-level split seed")->capture_default_str();
    app->add_option("--ratios", ratios, "train,val,test ratios")->delimiter(',')->expected(3)->capture_default_str();
  }

  SplitRatios split_ratios() const {
    if (ratios.size() != 3) throw ConfigError("--ratios needs three values");
    return {ratios[0], ratios[1], ratios[2]};
  }

  json to_json() const { return {{"manifest", manifest}, {"split_seed", split_seed}, {"ratios", ratios}}; }
};

struct TrainFlags {
  std::optional<double> lambda;
  int max_iter = 1000;
  double tol = 1e-6;

  void add(CLI::App* app) {
    app->add_option("--lambda", lambda, "L2 strength on standardized weights (default 1/n_train)");
    app->add_option("--max-iter", max_iter, "maximum optimizer iterations")->capture_default_str();
    app->add_option("--tol", tol, "stop when max |gradient| < tol")->capture_default_str();
  }

  TrainOptions options() const { return {lambda, max_iter, tol}; }

  json to_json() const {
    return {{"lambda", lambda ? json(*lambda) : json(nullptr)}, {"max_iter", max_iter}, {"tol", tol}};
  }
};

RecordSplits load_split_records(const SplitFlags& flags) {
  const DumpManifest manifest = read_manifest(flags.manifest);
  const ManifestSplits parts = split_dataset(manifest, flags.split_ratios(), flags.split_seed);
  for (const auto* part : {&parts.train, &parts.val, &parts.test}) {
    if (part->examples.empty()) throw ConfigError("split ratios leave an empty split for this manifest");
  }
  return {manifest.dims, load_records(parts.train), load_records(parts.val), load_records(parts.test)};
}

void write_ablation_csv(const std::string& path, const std::vector<AblationRow>& rows,
                        const std::vector<AblationVariant>& variants) {
  auto out = open_out(path);
  out << "variant,f1,auroc,n_pos,n_neg,precision,recall,threshold,num_features,operator,cutoff,padding,levels,"
         "boundary,keep,top_k\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i].report;
    const auto& v = variants[i];
    out << rows[i].variant << ',' << fmt10(r.f1) << ',' << fmt10(r.auroc) << ',' << r.n_pos << ',' << r.n_neg << ','
        << fmt10(r.precision) << ',' << fmt10(r.recall) << ',' << fmt10(r.threshold_used) << ','
        << rows[i].num_features << ',' << to_string(v.config.op) << ',' << fmt10(v.config.fourier_cutoff) << ','
        << to_string(v.config.wavelet_padding) << ',' << v.config.wavelet_levels << ','
        << to_string(v.config.laplacian_boundary) << ','
        << (v.keep ? (*v.keep == KeepType::ContextOnly ? "ctx" : "gen") : "both") << ','
        << (v.top_k ? std::to_string(*v.top_k) : std::string("all")) << '\n';
  }
  finish(out, path);
}

void print_report(const EvalReport& r) {
  std::cout << "f1 " << fmt10(r.f1) << "  precision " << fmt10(r.precision) << "  recall " << fmt10(r.recall)
            << "  auroc " << (r.auroc ? fmt10(*r.auroc) : std::string("n/a")) << "\n"
            << "threshold " << fmt10(r.threshold_used) << "  positives " << r.n_pos << "  negatives " << r.n_neg
            << "  (tp " << r.confusion.tp << ", fp " << r.confusion.fp << ", tn " << r.confusion.tn << ", fn "
            << r.confusion.fn << ")\n";
}

// --- subcommands ----------------------------------------------------------------

struct GenSynth {
  SyntheticSpec spec;
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("gen-synth", "write a synthetic attention dump and manifest");
    c->add_option("--out-dir", out_dir, "output directory")->required();
    c->add_option("--n-examples", spec.n_examples)->capture_default_str();
    c->add_option("--context-len", spec.context_len)->capture_default_str();
    c->add_option("--gen-len", spec.gen_len)->capture_default_str();
    c->add_option("--layers", spec.num_layers)->capture_default_str();
    c->add_option("--heads", spec.num_heads)->capture_default_str();
    c->add_option("--halluc-rate", spec.halluc_rate)->capture_default_str();
    c->add_option("--kernel-width", spec.smooth_kernel_width, "moving-average width for grounded rows")
        ->capture_default_str();
    c->add_option("--jag", spec.jag_amplitude, "perturbation amplitude for hallucinated rows")->capture_default_str();
    c->add_option("--seed", spec.seed)->capture_default_str();
    c->add_option("--model-name", spec.model_name)->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    const json config = {{"out_dir", out_dir},
                         {"n_examples", spec.n_examples},
                         {"context_len", spec.context_len},
                         {"gen_len", spec.gen_len},
                         {"num_layers", spec.num_layers},
                         {"num_heads", spec.num_heads},
                         {"halluc_rate", spec.halluc_rate},
                         {"smooth_kernel_width", spec.smooth_kernel_width},
                         {"jag_amplitude", spec.jag_amplitude},
                         {"model_name", spec.model_name}};
    const DumpManifest m = generate_synthetic(spec, out_dir);
    std::size_t tokens = 0, positives = 0;
    for (const auto& e : m.examples) {
      tokens += e.labels.size();
      for (int y : e.labels) positives += static_cast<std::size_t>(y);
    }
    write_json_file((fs::path(out_dir) / "synthetic.json").string(),
                    {{"reproducibility", reproducibility("gen-synth", config, spec.seed)},
                     {"tokens", tokens},
                     {"hallucinated_tokens", positives}});
    std::cout << "wrote " << m.examples.size() << " examples (" << tokens << " tokens, " << positives
              << " hallucinated) to " << out_dir << "\n";
  }
};

struct Extract {
  SplitFlags split;
  OperatorFlags op;
  int window = 1;
  bool span = false;
  std::string which = "all";
  std::string out;
  CLI::Option* window_opt = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("extract", "compute per-token (or per-span) spectral features");
    split.add(c);
    op.add(c);
    window_opt = c->add_option("--window", window, "span length; > 1 aggregates spans")->capture_default_str();
    c->add_flag("--span", span, "span mode with the default window of 8 (unless --window is given)");
    c->add_option("--split", which, "all|train|val|test")->capture_default_str();
    c->add_option("--out", out, "feature CSV path")->required();
    c->callback([this] { run(); });
  }

  void run() {
    if (span && window_opt->count() == 0) window = 8;
    if (window < 1) throw ConfigError("--window must be >= 1");
    const SpectralConfig config = op.config(window);
    const DumpManifest manifest = read_manifest(split.manifest);
    DumpManifest chosen = manifest;
    if (which != "all") {
      const ManifestSplits parts = split_dataset(manifest, split.split_ratios(), split.split_seed);
      if (which == "train") chosen = parts.train;
      else if (which == "val") chosen = parts.val;
      else if (which == "test") chosen = parts.test;
      else throw ConfigError("--split must be all, train, val or test");
    }
    FeatureMatrix m = extract_features(load_records(chosen), config, manifest.dims);
    if (window > 1) m = aggregate_spans(m, window);

    json cfg = split.to_json();
    cfg["split"] = which;
    cfg["operator_config"] = to_json_value(config);
    cfg["window"] = window;
    write_features(out, m, {{"reproducibility", reproducibility("extract", cfg, split.split_seed)}});
    std::cout << "wrote " << m.size() << " rows x " << m.width() << " features to " << out << "\n";
  }
};

struct Train {
  std::string features, val_features, out_model;
  TrainFlags flags;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "fit the logistic detector");
    c->add_option("--features", features, "training feature CSV")->required();
    c->add_option("--val-features", val_features, "validation feature CSV for threshold selection");
    flags.add(c);
    c->add_option("--out-model", out_model, "model JSON path")->required();
    c->callback([this] { run(); });
  }

  void run() {
    const FeatureMatrix train_set = read_features(features);
    LinearModel model = train(train_set, flags.options());
    json selection = {{"source", "default"}, {"threshold", 0.5}};
    if (!val_features.empty()) {
      const FeatureMatrix val = read_features(val_features);
      if (val.window != train_set.window || !(val.config == train_set.config)) {
        throw StructuralError("validation features '" + val_features +
                              "' were extracted with a different operator config or window than '" + features + "'");
      }
      const ThresholdSelection sel = select_threshold(model, val);
      model.threshold = sel.threshold;
      selection = {{"source", sel.fallback ? "fallback-single-class" : "validation"},
                   {"threshold", sel.threshold},
                   {"validation_f1", sel.f1}};
      if (sel.fallback) std::cerr << "warning: validation set has a single class; threshold stays at 0.5\n";
    }
    json cfg = flags.to_json();
    cfg["features"] = features;
    cfg["val_features"] = val_features;
    save_model(out_model, model,
               {{"threshold_selection", selection}, {"reproducibility", reproducibility("train", cfg, 0)}});
    std::cout << (model.converged ? "converged" : "did not converge") << " after " << model.iterations_used
              << " iterations; threshold " << fmt10(model.threshold) << "; wrote " << out_model << "\n";
  }
};

struct Eval {
  std::string model_path, features, report;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "score a feature file with a trained model");
    c->add_option("--model", model_path, "model JSON")->required();
    c->add_option("--features", features, "feature CSV")->required();
    c->add_option("--report", report, "EvalReport JSON output path");
    c->callback([this] { run(); });
  }

  void run() {
    const LinearModel model = load_model(model_path);
    const FeatureMatrix m = read_features(features);
    if (model.window != m.window) {
      throw StructuralError("model was trained with window " + std::to_string(model.window) +
                            " but the features use window " + std::to_string(m.window));
    }
    if (!(model.config == m.config)) {
      throw StructuralError("model was trained on operator config " + to_json_value(model.config).dump() +
                            " but the features use " + to_json_value(m.config).dump());
    }
    const auto scores = predict_proba(model, m);
    EvalReport r = f1_at_threshold(scores, m.labels(), model.threshold);
    r.granularity = m.window > 1 ? Granularity::Span : Granularity::Token;
    r.operator_config = m.config;
    print_report(r);
    if (!report.empty()) {
      json j = to_json_value(r);
      j["reproducibility"] = reproducibility("eval", {{"model", model_path}, {"features", features}}, 0);
      write_json_file(report, j);
    }
  }
};

struct Ablate {
  SplitFlags split;
  OperatorFlags op;
  TrainFlags flags;
  int window = 1;
  bool band = false, cutoff_sweep_flag = false, types = false;
  std::vector<double> cutoffs;
  std::vector<std::size_t> top_k;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("ablate", "train and evaluate a list of variants on one split");
    split.add(c);
    op.add(c);
    flags.add(c);
    c->add_option("--window", window, "span length")->capture_default_str();
    c->add_flag("--band-sweep", band, "Fourier high / low / full");
    c->add_flag("--cutoff-sweep", cutoff_sweep_flag, "Fourier high band over a cutoff grid");
    c->add_option("--cutoffs", cutoffs, "cutoff grid for --cutoff-sweep (default 0.05,0.10,...,0.50)")
        ->delimiter(',');
    c->add_flag("--type-ablation", types, "ctx+gen / ctx-only / gen-only");
    c->add_option("--top-k", top_k, "retrain on the k most important heads")->delimiter(',');
    c->add_option("--out", out, "ablation CSV path")->required();
    c->callback([this] { run(); });
  }

  void run() {
    if (window < 1) throw ConfigError("--window must be >= 1");
    const SpectralConfig base = op.config(window);
    std::vector<AblationVariant> variants;
    auto append = [&](std::vector<AblationVariant> v) { variants.insert(variants.end(), v.begin(), v.end()); };
    if (band) append(band_sweep(base));
    if (cutoff_sweep_flag) append(cutoff_sweep(base, cutoffs.empty() ? default_cutoff_grid() : cutoffs));
    if (types) append(type_ablation(base));
    if (!top_k.empty()) append(top_k_sweep(base, top_k));
    if (variants.empty()) variants.push_back({"baseline", base, std::nullopt, std::nullopt});

    const RecordSplits records = load_split_records(split);
    const auto rows = run_ablation(records, variants, {window, flags.options()});
    write_ablation_csv(out, rows, variants);

    json cfg = split.to_json();
    cfg["operator_config"] = to_json_value(base);
    cfg["train"] = flags.to_json();
    cfg["window"] = window;
    json vs = json::array();
    for (const auto& v : variants) vs.push_back(v.name);
    cfg["variants"] = vs;
    write_json_file(out + ".meta.json", {{"reproducibility", reproducibility("ablate", cfg, split.split_seed)}});
    for (const auto& r : rows)
      std::cout << r.variant << ": auroc " << fmt10(r.report.auroc) << ", f1 " << fmt10(r.report.f1) << "\n";
  }
};

struct Analyze {
  SplitFlags split;
  OperatorFlags op;
  TrainFlags flags;
  int window = 1;
  std::vector<std::size_t> top_k{100, 50, 10};
  std::string out_dir;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("analyze", "head/layer importance, top-k heads, ctx vs gen");
    split.add(c);
    op.add(c);
    flags.add(c);
    c->add_option("--window", window, "span length")->capture_default_str();
    c->add_option("--top-k", top_k, "head counts to retrain on")->delimiter(',')->capture_default_str();
    c->add_option("--out-dir", out_dir, "output directory")->required();
    c->callback([this] { run(); });
  }

  void run() {
    if (window < 1) throw ConfigError("--window must be >= 1");
    const SpectralConfig config = op.config(window);
    const RecordSplits records = load_split_records(split);
    const FeatureSplits features = extract_splits(records, config, window);
    const PipelineResult full = train_and_evaluate(features, flags.options());
    const std::string granularity = to_string(window > 1 ? Granularity::Span : Granularity::Token);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    for (auto [space, leaf] : {std::pair{ImportanceSpace::Standardized, "layer_importance.csv"},
                               std::pair{ImportanceSpace::Raw, "layer_importance_raw.csv"}}) {
      const std::string path = (dir / leaf).string();
      auto out = open_out(path);
      out << "layer,mean_importance,std_importance,granularity\n";
      for (const auto& li : layer_importance(full.model, records.dims, space))
        out << li.layer << ',' << fmt10(li.mean) << ',' << fmt10(li.std) << ',' << granularity << '\n';
      finish(out, path);
    }
    {
      const std::string path = (dir / "head_importance.csv").string();
      auto out = open_out(path);
      out << "layer,head,importance_standardized,importance_raw\n";
      const auto std_imp = head_importance(full.model, ImportanceSpace::Standardized);
      const auto raw_imp = head_importance(full.model, ImportanceSpace::Raw);
      for (std::size_t i = 0; i < std_imp.size(); ++i) {
        out << std_imp[i].head.layer << ',' << std_imp[i].head.head << ',' << fmt10(std_imp[i].importance) << ','
            << fmt10(raw_imp[i].importance) << '\n';
      }
      finish(out, path);
    }

    std::vector<AblationVariant> top_variants{{"all", config, std::nullopt, std::nullopt}};
    for (const auto& v : top_k_sweep(config, top_k)) top_variants.push_back(v);
    const auto top_rows = run_ablation(records, top_variants, {window, flags.options()});
    write_ablation_csv((dir / "top_k.csv").string(), top_rows, top_variants);

    const auto type_variants = type_ablation(config);
    const auto type_rows = run_ablation(records, type_variants, {window, flags.options()});
    write_ablation_csv((dir / "attention_type.csv").string(), type_rows, type_variants);

    json cfg = split.to_json();
    cfg["operator_config"] = to_json_value(config);
    cfg["train"] = flags.to_json();
    cfg["window"] = window;
    cfg["top_k"] = top_k;
    json summary = {{"reproducibility", reproducibility("analyze", cfg, split.split_seed)},
                    {"full_model_report", to_json_value(full.report)},
                    {"top_heads", json::array()}};
    const std::size_t shown = std::min<std::size_t>(10, full.model.layout.heads.size());
    for (const auto& id : top_k_heads(full.model, shown)) summary["top_heads"].push_back({id.layer, id.head});
    write_json_file((dir / "analyze.json").string(), summary);
    save_model((dir / "full_model.json").string(), full.model);
    std::cout << "full model auroc " << fmt10(full.report.auroc) << "; wrote analysis to " << out_dir << "\n";
  }
};

struct ToySim {
  std::vector<int> ks{1, 2, 4, 8, 16};
  int t = 64;
  double tau = 0.5, delta = 2.0;
  int trials = 10000;
  std::uint64_t seed = 0;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("toy-sim", "Monte-Carlo roughness curve of the Gaussian-mixture toy model");
    c->add_option("--k-sweep", ks, "mixture sizes K")->delimiter(',')->capture_default_str();
    c->add_option("--t", t, "prediction position")->capture_default_str();
    c->add_option("--tau", tau, "projected noise std")->capture_default_str();
    c->add_option("--delta", delta, "spacing of the projected means")->capture_default_str();
    c->add_option("--trials", trials)->capture_default_str();
    c->add_option("--seed", seed)->capture_default_str();
    c->add_option("--out", out, "CSV path")->required();
    c->callback([this] { run(); });
  }

  void run() {
    if (ks.empty()) throw ConfigError("--k-sweep needs at least one K");
    const auto configs = toy::k_sweep_configs(ks, t, delta, tau, trials, seed);
    const auto curve = toy::roughness_curve(configs);
    auto csv = open_out(out);
    csv << "K,t,tau,delta,trials,mean_roughness,std_error,switch_prob_est,logit_energy_est,logit_energy_bound\n";
    for (const auto& s : curve) {
      csv << s.num_components << ',' << s.position << ',' << fmt10(s.noise_std) << ',' << fmt10(delta) << ','
          << s.trials << ',' << fmt10(s.roughness.value) << ',' << fmt10(s.roughness.std_error) << ','
          << fmt10(s.switch_probability.value) << ',' << fmt10(s.logit_gap_energy.value) << ','
          << fmt10(s.logit_gap_bound) << '\n';
    }
    finish(csv, out);
    const bool trend = toy::non_decreasing(curve);
    const json cfg = {{"k_sweep", ks}, {"t", t}, {"tau", tau}, {"delta", delta}, {"trials", trials}};
    write_json_file(out + ".meta.json",
                    {{"reproducibility", reproducibility("toy-sim", cfg, seed)}, {"non_decreasing_in_K", trend}});
    std::cout << "mean roughness " << (trend ? "is" : "is NOT") << " non-decreasing in K (2 pooled SE); wrote "
              << out << "\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral attention features for hallucination detection"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with the same keys as the flags; flags win");
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker threads (default: ATTNSPEC_THREADS or hardware concurrency)");
  app.parse_complete_callback([&] {
    if (threads > 0) setenv("ATTNSPEC_THREADS", std::to_string(threads).c_str(), 1);
  });

  GenSynth gen_synth;
  Extract extract;
  Train train_cmd;
  Eval eval;
  Ablate ablate;
  Analyze analyze;
  ToySim toy_sim;
  gen_synth.add(app);
  extract.add(app);
  train_cmd.add(app);
  eval.add(app);
  ablate.add(app);
  analyze.add(app);
  toy_sim.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::Config);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
