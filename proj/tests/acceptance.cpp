// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero
// if any criterion fails. argv[1] is a scratch directory for the campaign runs.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <queue>
#include <random>
#include <sstream>

#include "domino/cli.hpp"
#include "domino/dependency.hpp"
#include "domino/engine.hpp"
#include "domino/fixtures.hpp"
#include "domino/model_io.hpp"
#include "domino/pruner.hpp"
#include "domino/report.hpp"

using namespace domino;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor uniform_images(const NetworkGraph& g, std::size_t n, std::uint64_t seed) {
  const LayerNode& in = g.layer(g.input_index());
  Tensor x({n, in.out_channels, in.out_height, in.out_width});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : x.values()) v = static_cast<float>(u(rng));
  return x;
}

std::set<ChannelRef> as_set(const std::vector<ChannelRef>& v) { return {v.begin(), v.end()}; }

// 1. prune_set == oracle_prune_set on 200 random graphs.
Outcome criterion1() {
  const auto t0 = Clock::now();
  std::size_t seeds = 0, bad = 0, joins = 0, splits = 0, grouped = 0;
  for (std::uint64_t g = 1; g <= 200; ++g) {
    const Model m = random_graph(g);
    const std::size_t w = m.graph.count(LayerKind::Conv2D) + m.graph.count(LayerKind::FullyConnected);
    bool has_split = false, has_group = false;
    for (std::size_t i = 0; i < m.graph.size(); ++i) {
      has_split |= m.graph.consumers(i).size() > 1;
      has_group |= m.graph.layer(i).groups > 1;
    }
    const bool has_join = m.graph.count(LayerKind::EltwiseAdd) > 0;
    if (w < 3 || w > 8 || !(has_join || has_split || has_group)) return {false, "graph " + std::to_string(g) + " off-spec"};
    joins += has_join;
    splits += has_split;
    grouped += has_group;
    const DependencyGraph dep = build_dependency(m.graph);
    for (const LayerNode& l : m.graph.layers()) {
      if (!is_weight_bearing(l.kind)) continue;
      for (std::size_t i = 0; i < l.out_channels; ++i, ++seeds) {
        const PruneSet a = prune_set(dep, out_ch(l.id, i));
        const PruneSet b = oracle_prune_set(m.graph, out_ch(l.id, i));
        bad += !(a.coparents == b.coparents && a.siblings == b.siblings && a.weight_slices == b.weight_slices &&
                 a.bias_params == b.bias_params);
      }
    }
  }
  const double s = seconds_since(t0);
  return {bad == 0 && s < 30.0, "200 graphs (" + std::to_string(joins) + " with joins, " + std::to_string(splits) +
                                    " with splits, " + std::to_string(grouped) + " grouped), " +
                                    std::to_string(seeds - bad) + "/" + std::to_string(seeds) +
                                    " seeds exactly equal, " + fmt("%.1f s", s)};
}

// 2. Paper micro-examples.
Outcome criterion2() {
  std::vector<std::string> failures;
  {
    const DependencyGraph dep = build_dependency(group_pair_toy(1).graph);
    const std::set<ChannelRef> p02 = {out_ch("prev", 0), out_ch("prev", 2)}, p13 = {out_ch("prev", 1), out_ch("prev", 3)};
    for (std::size_t i : {0, 2}) {
      if (coparents_closure(dep, out_ch("prev", i)) != p02) failures.push_back("group pair {0,2}");
    }
    for (std::size_t i : {1, 3}) {
      if (coparents_closure(dep, out_ch("prev", i)) != p13) failures.push_back("group pair {1,3}");
    }
  }
  {
    const Model m = linear_toy(1);
    const DependencyGraph dep = build_dependency(m.graph);
    for (const LayerNode& l : m.graph.layers()) {
      if (!is_weight_bearing(l.kind)) continue;
      for (std::size_t i = 0; i < l.out_channels; ++i) {
        const ChannelRef c = out_ch(l.id, i);
        if (coparents_closure(dep, c) != std::set<ChannelRef>{c}) failures.push_back("linear coparents " + to_string(c));
        if (siblings_closure(dep, c) != as_set(dep.succ(c))) failures.push_back("linear siblings " + to_string(c));
      }
    }
  }
  {
    const DependencyGraph dep = build_dependency(spine_toy(1).graph);
    for (std::size_t i = 0; i < 8; ++i) {
      const std::set<ChannelRef> spine = {out_ch("stem", i), out_ch("block1b", i), out_ch("block2b", i)};
      for (const auto& c : spine) {
        if (coparents_closure(dep, c) != spine) failures.push_back("spine index " + std::to_string(i));
      }
    }
  }
  return {failures.empty(), failures.empty() ? "grouped {0,2}/{1,3}; linear singletons with siblings = succ; "
                                               "spine stem+block1b+block2b coupled at all 8 indices"
                                             : "first failure: " + failures.front()};
}

// 3. Dead-parameter invariant on resblock-toy: every pruned weight slice
// replaced with random values at once leaves the logits bit-identical.
Outcome criterion3() {
  Model m = resblock_toy(11);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> centred(-0.5, 0.5), positive(0.5, 1.5), noise(-1.0, 1.0);
  for (auto& [name, t] : m.params) {
    if (name.find(".weight") != std::string::npos) continue;
    const bool pos = name.ends_with(".var") || name.ends_with(".scale");
    for (auto& v : t.values()) v = static_cast<float>(pos ? positive(rng) : centred(rng));
  }
  const Tensor x = uniform_images(m.graph, 8, 5);
  const PruneState fresh(m.graph, m.params, never_prune_guard(m.graph));
  std::size_t channels = 0, zero_fail = 0, logit_fail = 0;
  for (const auto& c : fresh.candidates()) {
    ++channels;
    PruneState s = fresh;
    const PruneSet ps = prune_set(s.dependency(), c);
    s.apply_prune(ps);
    const auto r = forward(s.graph(), s.params(), x, {});
    bool zero = true;
    for (const auto& cp : ps.coparents) {
      for (std::size_t idx = r.graph.index_of(cp.layer); idx < r.graph.size(); ++idx) {
        // The producer's map and the maps of the ops that follow it up to the join.
        const LayerNode& l = r.graph.layer(idx);
        if (idx != r.graph.index_of(cp.layer) && !is_absorbable(l.kind)) break;
        if (idx != r.graph.index_of(cp.layer) && r.graph.predecessors(idx).front() != idx - 1) break;
        const Tensor& a = r.activations[idx];
        for (std::size_t n = 0; n < a.dim(0); ++n) {
          for (float v : a.plane(n, cp.index)) zero &= v == 0.0f;
        }
      }
    }
    zero_fail += !zero;

    TensorStore noisy = s.params();
    for (const auto& slice : ps.weight_slices) {
      Tensor& w = noisy.at(s.graph().layer(slice.layer).params.weight);
      const std::size_t M = w.dim(0), C = w.dim(1), K = w.dim(2) * w.dim(3);
      for (std::size_t o = 0; o < M; ++o) {
        for (std::size_t j = 0; j < C; ++j) {
          if ((slice.axis == 0 ? o : j) != slice.index) continue;
          for (std::size_t e = 0; e < K; ++e) w[(o * C + j) * K + e] = static_cast<float>(noise(rng));
        }
      }
    }
    const Tensor before = logits(s.graph(), s.params(), x);
    const Tensor after = logits(s.graph(), noisy, x);
    logit_fail += std::memcmp(before.data(), after.data(), before.size() * sizeof(float)) != 0;
  }
  return {zero_fail == 0 && logit_fail == 0,
          std::to_string(channels) + " channels; pruned maps non-zero in " + std::to_string(zero_fail) +
              ", logits changed in " + std::to_string(logit_fail)};
}

// 4. Central differences in double precision against backward().
std::vector<std::size_t> kink_pattern(const BasicBatchResult<double>& r) {
  std::vector<std::size_t> p;
  for (std::size_t i = 0; i < r.graph.size(); ++i) {
    const LayerNode& l = r.graph.layer(i);
    const auto& in = r.activations[r.graph.predecessors(i).empty() ? i : r.graph.predecessors(i).front()];
    if (l.kind == LayerKind::ReLU) {
      for (double v : in.values()) p.push_back(v > 0.0);
    } else if (l.kind == LayerKind::MaxPool) {
      for (std::size_t n = 0; n < in.dim(0); ++n)
        for (std::size_t c = 0; c < in.dim(1); ++c)
          for (std::size_t oy = 0; oy < l.out_height; ++oy)
            for (std::size_t ox = 0; ox < l.out_width; ++ox) {
              std::size_t arg = 0;
              double best = -INFINITY;
              for (std::size_t ky = 0; ky < l.kernel; ++ky)
                for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                  const std::size_t y = oy * l.stride + ky, xx = ox * l.stride + kx;
                  const double v = in.plane(n, c)[y * in.dim(3) + xx];
                  if (v > best) best = v, arg = y * in.dim(3) + xx;
                }
              p.push_back(arg);
            }
    }
  }
  return p;
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  constexpr double h = 1e-3;
  std::size_t compared = 0, failed = 0, skipped = 0, largest = 0;
  double worst = 0.0;
  std::set<std::string> kinds;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Model m = gradcheck_net(seed);
    largest = std::max(largest, m.params.parameter_count());
    for (const LayerNode& l : m.graph.layers()) {
      kinds.insert(std::string(to_string(l.kind)) + (l.groups > 1 ? "/g" + std::to_string(l.groups) : ""));
    }
    const auto x = tensor_cast<double>(uniform_images(m.graph, 4, seed + 100));
    std::vector<int> labels = {0, 1, 2, static_cast<int>(seed % 3)};
    auto p = to_double(m.params);
    const auto base = backward<double>(m.graph, p, x, labels);
    const auto pattern = kink_pattern(base);
    for (auto& [name, t] : p) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double keep = t[i];
        t[i] = keep + h;
        const auto up = forward<double>(m.graph, p, x, labels);
        t[i] = keep - h;
        const auto down = forward<double>(m.graph, p, x, labels);
        t[i] = keep;
        if (kink_pattern(up) != pattern || kink_pattern(down) != pattern) {
          ++skipped;
          continue;
        }
        const double fd = (up.loss - down.loss) / (2.0 * h);
        const double an = base.grads_w.at(name)[i];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, rel);
        failed += rel > 1e-3;
        ++compared;
      }
    }
  }
  const double s = seconds_since(t0);
  const bool coverage = kinds.count("Conv2D") && kinds.count("Conv2D/g2") && kinds.count("FullyConnected") &&
                        kinds.count("BatchNorm") && kinds.count("MaxPool") && kinds.count("AvgPool") &&
                        kinds.count("EltwiseAdd");
  return {failed == 0 && compared > 0 && coverage && largest <= 1000 && s < 60.0,
          "5 nets (max " + std::to_string(largest) + " params), " + std::to_string(compared) + " compared, " +
              std::to_string(failed) + " over 1e-3, " + std::to_string(skipped) +
              " skipped (perturbation crosses a ReLU/max-pool kink), worst rel " + fmt("%.2e", worst) + ", " +
              fmt("%.1f s", s)};
}

// 5. score_all against explicit closure enumeration.
std::pair<std::set<ChannelRef>, std::set<ChannelRef>> enumerate_closure(const DependencyGraph& dep,
                                                                        const ChannelRef& seed) {
  std::set<ChannelRef> outs = {seed}, slots;
  std::queue<ChannelRef> work;
  work.push(seed);
  while (!work.empty()) {
    const ChannelRef c = work.front();
    work.pop();
    for (const auto& s : dep.succ(c)) {
      if (!slots.insert(s).second) continue;
      for (const auto& p : dep.slot_producers(s)) {
        if (outs.insert(p).second) work.push(p);
      }
    }
  }
  return {outs, slots};
}

Outcome criterion5() {
  std::size_t scores = 0, bad = 0, unequal = 0, configs = 0;
  std::string first;
  for (const auto& name : fixture_names()) {
    const Model m = make_fixture(name, 21);
    const DependencyGraph dep = build_dependency(m.graph);
    Dataset batch;
    batch.images = uniform_images(m.graph, 16, 22);
    const std::size_t classes = m.graph.layer(m.graph.predecessors(m.graph.loss_index()).front()).out_channels;
    for (std::size_t i = 0; i < 16; ++i) batch.labels.push_back(static_cast<int>(i % classes));
    for (const char* metric : {"l1", "l1-avg", "taylor-w", "taylor-w-avg", "taylor-f", "taylor-f-avg"}) {
      const MetricConfig mc = parse_metric(metric);
      const RawSaliencies raw = compute_raw_saliencies(dep, m.params, mc, &batch);
      for (Variant v : {Variant::Channel, Variant::DominoO, Variant::DominoIO}) {
        ++configs;
        const SaliencyVector all = score_all(dep, raw, {v, mc});
        for (const auto& [ref, s] : all) {
          ++scores;
          auto [outs, slots] = enumerate_closure(dep, ref);
          double sum = 0.0, count = 0.0;
          if (v == Variant::Channel) outs = {ref};
          for (const auto& o : outs) sum += raw.at(o).raw, count += raw.at(o).count;
          if (v == Variant::DominoIO) {
            for (const auto& sl : slots) sum += raw.at(sl).raw, count += raw.at(sl).count;
          }
          const double expected = mc.averaged ? sum / count : sum;
          const double err = std::abs(expected - s.score);
          if (err > 1e-6 * std::max(std::abs(expected), std::abs(s.score))) {
            if (bad++ == 0) first = name + " " + metric + " " + std::string(to_string(v)) + " " + to_string(ref);
          }
          if (v != Variant::Channel) {
            for (const auto& o : outs) {
              if (all.count(o) && all.at(o).score != s.score) ++unequal;
            }
          }
        }
      }
    }
  }
  return {bad == 0 && unequal == 0, std::to_string(configs) + " fixture x variant x metric runs, " +
                                        std::to_string(scores) + " scores, " + std::to_string(bad) +
                                        " off by >1e-6 rel, " + std::to_string(unequal) +
                                        " unequal within a class" + (first.empty() ? "" : ", first " + first)};
}

// 6 and 7. Desk-scale protocol through the command-line tool.
struct Campaign {
  bool ok = true;
  std::string error;
  std::map<std::string, std::vector<double>> trained;  // fixture -> accuracy per seed
  std::map<std::string, std::vector<ConditionSummary>> summaries;
  double seconds = 0.0;
};

int tool(std::vector<std::string> args, std::string& err_text) {
  args.insert(args.begin(), "domino");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  err_text = err.str();
  return code;
}

Campaign run_protocol(const fs::path& dir) {
  const auto t0 = Clock::now();
  Campaign c;
  fs::remove_all(dir);
  for (const std::string fixture : {"resblock-toy", "grouped-toy"}) {
    const fs::path out = dir / fixture;
    std::string err;
    if (tool({"prune", "--fixture", fixture, "--seeds", "1,2,3,4", "--variant", "channel,domino-o,domino-io",
              "--metric", "l1,l1-avg", "--stop-drop", "5", "--out", out.string()},
             err) != 0 ||
        tool({"report", out.string(), "--gnuplot"}, err) != 0) {
      c.ok = false;
      c.error = fixture + ": " + err;
      return c;
    }
    std::vector<PruneTrace> traces;
    for (const auto& e : fs::directory_iterator(out)) {
      if (!e.path().filename().string().starts_with("trace_")) continue;
      std::ifstream in(e.path());
      traces.push_back(read_trace_csv(in));
    }
    std::map<std::string, double> per_seed;
    for (const auto& t : traces) per_seed[t.metadata.at("seed")] = std::stod(t.metadata.at("trained_accuracy"));
    for (const auto& [seed, acc] : per_seed) c.trained[fixture].push_back(acc);
    c.summaries[fixture] = summarize(traces);
  }
  c.seconds = seconds_since(t0);
  return c;
}

double condition_mean(const std::vector<ConditionSummary>& s, const std::string& variant, const std::string& metric) {
  for (const auto& c : s) {
    if (c.variant == variant && c.metric == metric) return c.mean;
  }
  return NAN;
}

Outcome criterion6(const Campaign& c) {
  if (!c.ok) return {false, c.error};
  const auto& res = c.trained.at("resblock-toy");
  const auto& grp = c.trained.at("grouped-toy");
  const bool trained = res.size() == 4 && grp.size() == 4 &&
                       std::all_of(res.begin(), res.end(), [](double a) { return a >= 0.60; }) &&
                       std::all_of(grp.begin(), grp.end(), [](double a) { return a >= 0.95; });
  const auto& s = c.summaries.at("resblock-toy");
  const double io = condition_mean(s, "domino-io", "l1-avg"), ch = condition_mean(s, "channel", "l1-avg");
  const bool directional = io >= ch - 0.02;
  std::string acc = "trained accuracy resblock-toy";
  for (double a : res) acc += fmt(" %.3f", a);
  acc += ", grouped-toy";
  for (double a : grp) acc += fmt(" %.3f", a);
  return {trained && directional && c.seconds < 1800.0,
          acc + "; resblock-toy mean headline domino-io/l1-avg " + fmt("%.2f%%", io * 100) + " vs channel/l1-avg " +
              fmt("%.2f%%", ch * 100) + "; " + fmt("%.0f s", c.seconds)};
}

Outcome criterion7(const fs::path& a, const fs::path& b) {
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file() || !e.path().filename().string().starts_with("trace_")) continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || read_file_bytes(e.path()) != read_file_bytes(other)) ++differing;
  }
  return {files == 48 && differing == 0,
          std::to_string(files) + " trace CSVs compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "domino-acceptance";
  bool all = true;
  auto report = [&](int n, const char* title, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all &= o.pass;
    std::cout << "criterion " << n << " [" << (o.pass ? "PASS" : "FAIL") << "] " << title << ": " << o.detail
              << std::endl;
  };
  report(1, "prune-set oracle equivalence", criterion1);
  report(2, "paper micro-examples", criterion2);
  report(3, "dead-parameter invariant", criterion3);
  report(4, "gradient correctness", criterion4);
  report(5, "domino arithmetic", criterion5);
  Campaign first;
  report(6, "desk-scale protocol", [&] {
    first = run_protocol(work / "run1");
    return criterion6(first);
  });
  report(7, "determinism", [&] {
    const Campaign second = run_protocol(work / "run2");
    if (!second.ok) return Outcome{false, second.error};
    return criterion7(work / "run1", work / "run2");
  });
  return all ? 0 : 1;
}
