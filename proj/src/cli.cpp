#include "domino/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "domino/checks.hpp"
#include "domino/error.hpp"
#include "domino/model_io.hpp"
#include "domino/pruner.hpp"
#include "domino/report.hpp"

namespace domino {

namespace fs = std::filesystem;

namespace {

struct ModelArgs {
  std::string manifest;
  std::string blob;
  std::string fixture;
  std::uint64_t fixture_seed = 1;
  std::string group_mapping;
};

struct DataArgs {
  std::string dataset = "synth";
  std::string synth_preset = "resblock-toy";
  std::uint64_t data_seed = 2024;
  std::string data_dir = "data/cifar-10-batches-bin";
  std::size_t subset = 0;
};

struct LoadedInput {
  Model model;
  std::string source;  // checksum or fixture name
};

void add_model_options(CLI::App* cmd, ModelArgs& a) {
  cmd->add_option("--model", a.manifest, "Model manifest (JSON)");
  cmd->add_option("--blob", a.blob, "Tensor blob; defaults to the manifest path with .bin");
  cmd->add_option("--fixture", a.fixture, "Use a built-in fixture instead of --model");
  cmd->add_option("--fixture-seed", a.fixture_seed, "Initialisation seed of --fixture");
  cmd->add_option("--group-mapping", a.group_mapping, "Override grouped-conv channel mapping")
      ->check(CLI::IsMember({"interleaved", "blocked"}));
}

void add_data_options(CLI::App* cmd, DataArgs& d) {
  cmd->add_option("--dataset", d.dataset, "Evaluation data")->check(CLI::IsMember({"cifar10", "synth"}));
  cmd->add_option("--synth-preset", d.synth_preset, "Fixture whose synthetic data spec to use");
  cmd->add_option("--data-seed", d.data_seed, "Seed of the synthetic data");
  cmd->add_option("--data-dir", d.data_dir, "Directory of CIFAR-10 binary batches");
  cmd->add_option("--subset", d.subset, "Keep the first N records of each CIFAR-10 split");
}

Model with_group_mapping(const Model& m, const std::string& mapping) {
  if (mapping.empty()) return m;
  std::vector<LayerNode> layers = expand_absorbed(m.graph).layers();
  for (auto& l : layers) {
    if (l.kind == LayerKind::Conv2D && l.groups > 1) l.mapping = parse_group_mapping(mapping);
  }
  return {build_graph(std::move(layers), m.params), m.params};
}

LoadedInput load_input(const ModelArgs& a) {
  LoadedInput in;
  if (!a.fixture.empty()) {
    in.model = make_fixture(a.fixture, a.fixture_seed);
    in.source = "fixture:" + a.fixture + "/" + std::to_string(a.fixture_seed);
  } else {
    if (a.manifest.empty()) throw Error(ErrorCode::InvalidArgument, "--model or --fixture is required");
    const fs::path blob = a.blob.empty() ? default_blob_path(a.manifest) : fs::path(a.blob);
    LoadedModel lm = load_model(a.manifest, blob);
    in.model = {std::move(lm.graph), std::move(lm.params)};
    in.source = lm.checksum;
  }
  in.model = with_group_mapping(in.model, a.group_mapping);
  return in;
}

SynthSplits load_data(const DataArgs& d) {
  if (d.dataset == "cifar10") {
    CifarSplits c = load_cifar10(d.data_dir, d.subset);
    return {std::move(c.train), std::move(c.test)};
  }
  return synth_dataset(d.data_seed, fixture_training(d.synth_preset).data);
}

std::vector<MetricConfig> metric_list(const std::vector<std::string>& names, bool avg) {
  std::vector<MetricConfig> out;
  for (const auto& n : names) {
    MetricConfig m = parse_metric(n);
    if (avg) m.averaged = true;
    out.push_back(m);
  }
  return out;
}

std::string join_refs(const auto& refs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : refs) arr.push_back(to_string(r));
  return arr.dump();
}

int cmd_analyze(const ModelArgs& a, const std::string& out_path, std::ostream& out) {
  const LoadedInput in = load_input(a);
  const DependencyGraph dep = build_dependency(in.model.graph);
  std::ostringstream lines;
  for (std::size_t cls = 0; cls < dep.class_count(); ++cls) {
    nlohmann::json j;
    j["class"] = cls;
    j["prunable"] = dep.class_prunable(cls);
    std::vector<std::string> coparents, siblings;
    for (std::size_t o : dep.class_members(cls)) coparents.push_back(to_string(dep.outputs()[o]));
    for (std::size_t s : dep.class_siblings(cls)) siblings.push_back(to_string(dep.slots()[s]));
    j["coparents"] = coparents;
    j["siblings"] = siblings;
    if (dep.class_prunable(cls)) {
      const PruneSet ps = prune_set(dep, dep.outputs()[dep.class_members(cls).front()]);
      nlohmann::json slices = nlohmann::json::array(), biases = nlohmann::json::array();
      for (const auto& w : ps.weight_slices) slices.push_back({{"layer", w.layer}, {"axis", w.axis}, {"index", w.index}});
      for (const auto& b : ps.bias_params) biases.push_back({{"tensor", b.tensor}, {"index", b.index}});
      j["weight_slices"] = slices;
      j["bias_params"] = biases;
    }
    lines << j.dump() << "\n";
  }
  if (out_path.empty()) {
    out << lines.str();
  } else {
    write_file_text(out_path, lines.str());
  }
  return kExitOk;
}

int cmd_saliency(const ModelArgs& a, const DataArgs& d, const std::string& variant, const std::string& metric, bool avg,
                 bool include_classifier, std::uint64_t seed, const std::string& out_path, std::ostream& out) {
  const LoadedInput in = load_input(a);
  DominoConfig cfg{parse_variant(variant), metric_list({metric}, avg).front()};
  const DependencyGraph dep = build_dependency(in.model.graph);
  Dataset batch;
  if (cfg.metric.needs_gradients()) batch = make_saliency_batch(load_data(d).train, cfg.metric.saliency_batch, seed);
  const RawSaliencies raw =
      compute_raw_saliencies(dep, in.model.params, cfg.metric, cfg.metric.needs_gradients() ? &batch : nullptr);
  const SaliencyVector scores = score_all(dep, raw, cfg);
  const PruneState state(in.model.graph, in.model.params, never_prune_guard(in.model.graph, include_classifier));
  const auto cand = state.candidates();
  const std::set<ChannelRef> candidates(cand.begin(), cand.end());
  std::ostringstream csv;
  csv.precision(9);
  csv << "layer,channel,raw,count,score\n";
  for (const auto& [ref, s] : scores) {
    if (!candidates.count(ref)) continue;
    csv << ref.layer << "," << ref.index << "," << s.raw << "," << s.count << "," << s.score << "\n";
  }
  if (out_path.empty()) {
    out << csv.str();
  } else {
    write_file_text(out_path, csv.str());
  }
  return kExitOk;
}

struct PruneArgs {
  std::vector<std::string> variants = {"channel", "domino-o", "domino-io"};
  std::vector<std::string> metrics = {"l1"};
  bool avg = false;
  double stop_drop = 5.0;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4};
  std::size_t eval_every = 1;
  bool include_classifier = false;
  std::string out = "traces";
};

std::string trace_name(const DominoConfig& cfg, std::uint64_t seed) {
  return "trace_" + std::string(to_string(cfg.variant)) + "_" + cfg.metric.name() + "_seed" + std::to_string(seed) +
         ".csv";
}

int cmd_prune(const ModelArgs& a, const DataArgs& d, const PruneArgs& p, std::ostream& out) {
  std::vector<DominoConfig> configs;
  for (const auto& m : metric_list(p.metrics, p.avg)) {
    for (const auto& v : p.variants) configs.push_back({parse_variant(v), m});
  }
  fs::create_directories(p.out);
  std::vector<fs::path> written;
  try {
    // Loaded models are shared by every seed; fixtures are retrained per seed.
    std::optional<LoadedInput> shared;
    std::optional<SynthSplits> shared_data;
    if (a.fixture.empty()) {
      shared = load_input(a);
      shared_data = load_data(d);
    }
    for (std::uint64_t seed : p.seeds) {
      LoadedInput in;
      SynthSplits data;
      std::string training;
      if (shared) {
        in = *shared;
        data = *shared_data;
      } else {
        TrainedFixture t = train_fixture(a.fixture, seed);
        in.model = with_group_mapping(t.model, a.group_mapping);
        in.source = "fixture:" + a.fixture + "/" + std::to_string(seed);
        data = std::move(t.data);
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", t.test_accuracy);
        training = buf;
      }
      for (const auto& cfg : configs) {
        const Dataset batch = make_saliency_batch(data.train, cfg.metric.saliency_batch, seed);
        CampaignOptions opts{p.stop_drop, p.eval_every, p.include_classifier};
        PruneTrace trace = run_campaign(in.model.graph, in.model.params, cfg, data.test, &batch, opts);
        trace.metadata["seed"] = std::to_string(seed);
        trace.metadata[in.source.starts_with("fnv1a64:") ? "blob_checksum" : "model"] = in.source;
        trace.metadata["dataset"] = d.dataset == "cifar10" ? "cifar10" : "synth";
        trace.metadata["rng"] = "mt19937_64";
        trace.metadata["saliency_batch"] = std::to_string(batch.size());
        if (!training.empty()) trace.metadata["trained_accuracy"] = training;
        std::ostringstream csv;
        write_trace_csv(trace, csv);
        const fs::path path = fs::path(p.out) / trace_name(cfg, seed);
        write_file_text(path, csv.str());
        written.push_back(path);
        out << path.string() << " headline=" << headline(trace) << " steps=" << trace.records.size() << "\n";
      }
    }
  } catch (...) {
    for (const auto& f : written) fs::remove(f);
    throw;
  }
  return kExitOk;
}

int cmd_report(const std::string& dir, const std::string& out_dir, bool gnuplot, std::ostream& out) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with("trace_") && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::EmptyTrace, "no trace_*.csv files in " + dir);
  std::vector<PruneTrace> traces;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      traces.push_back(read_trace_csv(in));
    } catch (const Error& e) {
      throw Error(e.code(), f.string() + ": " + e.what());
    }
  }
  const auto summaries = summarize(traces);
  std::ostringstream summary, imp_csv;
  write_summary_csv(summaries, summary);
  const fs::path target = out_dir.empty() ? fs::path(dir) : fs::path(out_dir);
  fs::create_directories(target);
  write_file_text(target / "summary.csv", summary.str());
  out << summary.str();
  bool has_baseline = false;
  for (const auto& s : summaries) has_baseline |= s.variant == "channel";
  if (has_baseline && summaries.size() > 1) {
    write_improvements_csv(improvements(summaries), imp_csv);
    write_file_text(target / "improvements.csv", imp_csv.str());
    out << "\n" << imp_csv.str();
  }
  if (gnuplot) {
    std::ostringstream dat;
    write_gnuplot_dat(summaries, dat);
    write_file_text(target / "summary.dat", dat.str());
  }
  return kExitOk;
}

int cmd_verify(const ModelArgs& a, std::size_t graphs, std::uint64_t seed, const std::string& fault,
               std::ostream& out) {
  const bool flip = fault == "group-mapping";
  std::vector<CheckResult> results;
  if (!a.manifest.empty() || !a.fixture.empty()) {
    const LoadedInput in = load_input(a);
    results.push_back(check_oracle(in.model, flip));
    results.push_back(check_dead_parameters(in.model, seed));
  } else {
    results.push_back(check_oracle_random(graphs, seed, flip));
    results.push_back(check_dead_parameters(resblock_toy(seed), seed));
  }
  results.push_back(check_gradients(5, seed));
  bool ok = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok &= r.passed;
  }
  return ok ? kExitOk : kExitCheckFailed;
}

int cmd_fixture(const std::string& name, std::uint64_t seed, bool train, const std::string& group_mapping,
                const std::string& out_dir, std::ostream& out) {
  fs::create_directories(out_dir);
  Model m;
  if (train) {
    TrainedFixture t = train_fixture(name, seed);
    out << name << " seed " << seed << " test accuracy " << t.test_accuracy << "\n";
    m = std::move(t.model);
  } else {
    m = make_fixture(name, seed);
  }
  m = with_group_mapping(m, group_mapping);
  const fs::path manifest = fs::path(out_dir) / (name + ".json");
  save_model(m.graph, m.params, manifest, default_blob_path(manifest));
  out << manifest.string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structured channel pruning with Domino saliency metrics", "domino"};
  app.require_subcommand(1);

  ModelArgs model;
  DataArgs data;
  std::string out_path;

  auto* analyze = app.add_subcommand("analyze", "Dump coparent classes and prune sets as JSON lines");
  add_model_options(analyze, model);
  analyze->add_option("--out", out_path, "Output file (default stdout)");

  std::string variant = "channel", metric = "l1";
  bool avg = false, include_classifier = false;
  std::uint64_t seed = 1;
  auto* saliency = app.add_subcommand("saliency", "Score every candidate channel");
  add_model_options(saliency, model);
  add_data_options(saliency, data);
  saliency->add_option("--variant", variant)->check(CLI::IsMember({"channel", "domino-o", "domino-io"}));
  saliency->add_option("--metric", metric);
  saliency->add_flag("--avg", avg, "Divide by the element count");
  saliency->add_option("--seed", seed, "Saliency batch sampling seed");
  saliency->add_flag("--include-classifier", include_classifier, "Score the classifier's channels too");
  saliency->add_option("--out", out_path, "Output CSV (default stdout)");

  PruneArgs pa;
  auto* prune = app.add_subcommand("prune", "Run pruning campaigns and write one trace per run");
  add_model_options(prune, model);
  add_data_options(prune, data);
  prune->add_option("--variant", pa.variants, "Variants (comma separated)")->delimiter(',');
  prune->add_option("--metric", pa.metrics, "Metrics (comma separated)")->delimiter(',');
  prune->add_flag("--avg", pa.avg, "Use the averaged form of every metric");
  prune->add_option("--stop-drop", pa.stop_drop, "Accuracy drop in percentage points");
  prune->add_option("--seeds", pa.seeds, "Run seeds (comma separated)")->delimiter(',');
  prune->add_option("--eval-every", pa.eval_every, "Evaluate accuracy every N iterations");
  prune->add_flag("--include-classifier", pa.include_classifier, "Allow pruning the classifier's outputs");
  prune->add_option("--out", pa.out, "Trace directory");

  std::string trace_dir;
  bool gnuplot = false;
  auto* report = app.add_subcommand("report", "Summarise a directory of traces");
  report->add_option("traces", trace_dir, "Trace directory")->required();
  report->add_option("--out", out_path, "Output directory (default: the trace directory)");
  report->add_flag("--gnuplot", gnuplot, "Also write summary.dat");

  std::size_t graphs = 200;
  std::string fault;
  auto* verify = app.add_subcommand("verify", "Run the oracle, gradient and dead-parameter self-checks");
  add_model_options(verify, model);
  verify->add_option("--graphs", graphs, "Random graphs for the oracle check");
  verify->add_option("--seed", seed, "Base seed");
  verify->add_option("--inject-fault", fault, "Test hook")->check(CLI::IsMember({"group-mapping"}));

  std::string fixture_name, group_mapping;
  bool train = false;
  auto* fixture = app.add_subcommand("fixture", "Write a built-in fixture as manifest + blob");
  fixture->add_option("name", fixture_name, "Fixture name")->required()->check(CLI::IsMember(fixture_names()));
  fixture->add_option("--seed", seed, "Initialisation and training seed");
  fixture->add_flag("--train", train, "Train on the fixture's synthetic data first");
  fixture->add_option("--group-mapping", group_mapping)->check(CLI::IsMember({"interleaved", "blocked"}));
  fixture->add_option("--out", out_path, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "domino: " << e.what() << "\n";
    return kExitError;
  }

  try {
    if (*analyze) return cmd_analyze(model, out_path, out);
    if (*saliency) return cmd_saliency(model, data, variant, metric, avg, include_classifier, seed, out_path, out);
    if (*prune) return cmd_prune(model, data, pa, out);
    if (*report) return cmd_report(trace_dir, out_path, gnuplot, out);
    if (*verify) return cmd_verify(model, graphs, seed, fault, out);
    if (*fixture) return cmd_fixture(fixture_name, seed, train, group_mapping, out_path, out);
  } catch (const Error& e) {
    err << "domino: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "domino: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace domino
