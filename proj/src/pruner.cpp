#include "domino/pruner.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "domino/error.hpp"

namespace domino {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::set<std::string> never_prune_guard(const NetworkGraph& graph, bool include_classifier) {
  if (include_classifier) return {};
  const auto layers = classifier_layers(graph);
  return {layers.begin(), layers.end()};
}

PruneState::PruneState(const NetworkGraph& graph, TensorStore params, std::set<std::string> excluded_layers)
    : dep_(graph), params_(std::move(params)), excluded_(std::move(excluded_layers)) {}

std::vector<ChannelRef> PruneState::candidates() const {
  std::vector<ChannelRef> out;
  for (std::size_t cls = 0; cls < dep_.class_count(); ++cls) {
    if (!dep_.class_prunable(cls)) continue;
    const auto& members = dep_.class_members(cls);
    const bool blocked = std::any_of(members.begin(), members.end(), [&](std::size_t o) {
      const ChannelRef& r = dep_.outputs()[o];
      return excluded_.count(r.layer) || pruned_.count(r);
    });
    if (blocked) continue;
    for (std::size_t o : members) out.push_back(dep_.outputs()[o]);
  }
  return out;
}

void PruneState::apply_prune(const PruneSet& pset) {
  for (const auto& c : pset.coparents) {
    if (pruned_.count(c)) throw Error(ErrorCode::OverlapWithPruned, to_string(c) + " is already pruned");
  }
  for (const auto& s : pset.siblings) {
    if (pruned_slots_.count(s)) throw Error(ErrorCode::OverlapWithPruned, to_string(s) + " is already pruned");
  }
  for (const auto& slice : pset.weight_slices) {
    Tensor& w = params_.at(graph().layer(slice.layer).params.weight);
    const std::size_t m_out = w.dim(0), m_in = w.dim(1), k2 = w.dim(2) * w.dim(3);
    if (slice.axis == 0) {
      std::fill_n(w.data() + slice.index * m_in * k2, m_in * k2, 0.0f);
    } else {
      for (std::size_t o = 0; o < m_out; ++o) std::fill_n(w.data() + (o * m_in + slice.index) * k2, k2, 0.0f);
    }
  }
  for (const auto& b : pset.bias_params) params_.at(b.tensor)[b.index] = 0.0f;
  pruned_.insert(pset.coparents.begin(), pset.coparents.end());
  pruned_slots_.insert(pset.siblings.begin(), pset.siblings.end());
  history_.push_back(pset);
}

double PruneState::weights_removed() const {
  auto tally = [&](LayerKind kind) {
    double zeroed = 0.0, total = 0.0;
    for (const LayerNode& l : graph().layers()) {
      if (l.kind != kind) continue;
      const auto dims = l.weight_dims();
      const double k2 = static_cast<double>(dims[2] * dims[3]);
      double rows = 0.0, cols = 0.0;
      for (std::size_t i = 0; i < l.out_channels; ++i) rows += pruned_.count(out_ch(l.id, i)) ? 1.0 : 0.0;
      for (std::size_t j = 0; j < l.slots(); ++j) cols += pruned_slots_.count(in_slot(l.id, j)) ? 1.0 : 0.0;
      const double m_out = static_cast<double>(dims[0]), m_in = static_cast<double>(dims[1]);
      zeroed += rows * m_in * k2 + (m_out - rows) * cols * k2;
      total += m_out * m_in * k2;
    }
    return std::pair{zeroed, total};
  };
  auto [zeroed, total] = tally(LayerKind::Conv2D);
  if (total == 0.0) std::tie(zeroed, total) = tally(LayerKind::FullyConnected);
  return total == 0.0 ? 0.0 : zeroed / total;
}

std::optional<ChannelRef> select_min(const SaliencyVector& scores) {
  std::optional<ChannelRef> best;
  double best_score = 0.0;
  // Map order is (layer id, side, index), so the first minimum wins ties.
  for (const auto& [ref, s] : scores) {
    if (!best || s.score < best_score) {
      best = ref;
      best_score = s.score;
    }
  }
  return best;
}

PruneRecord prune_step(PruneState& state, const DominoConfig& cfg, const StepInputs& in, bool evaluate,
                       std::size_t iteration) {
  const auto candidates = state.candidates();
  if (candidates.empty()) throw Error(ErrorCode::NothingLeftToPrune, "no unpruned candidate channel remains");

  const RawSaliencies raw =
      compute_raw_saliencies(state.dependency(), state.params(), cfg.metric, in.saliency_batch, state.pruned_mask());
  const SaliencyVector all = score_all(state.dependency(), raw, cfg, state.pruned_mask());
  SaliencyVector eligible;
  for (const auto& c : candidates) eligible.emplace(c, all.at(c));

  const ChannelRef seed = *select_min(eligible);
  const PruneSet pset = prune_set(state.dependency(), seed, state.pruned_mask());
  state.apply_prune(pset);

  PruneRecord rec;
  rec.iteration = iteration;
  rec.seed = seed;
  rec.set_size = pset.coparents.size();
  rec.weights_removed_cum = state.weights_removed();
  if (evaluate) {
    if (!in.test) throw Error(ErrorCode::EmptyDataset, "no evaluation split");
    rec.accuracy = evaluate_accuracy(state.graph(), state.params(), *in.test);
  }
  return rec;
}

PruneTrace run_campaign(const NetworkGraph& graph, const TensorStore& params, const DominoConfig& cfg,
                        const Dataset& test, const Dataset* saliency_batch, const CampaignOptions& opts,
                        PruneState* final_state) {
  if (opts.eval_every == 0) throw Error(ErrorCode::InvalidArgument, "eval-every must be positive");
  PruneState state(graph, params, never_prune_guard(graph, opts.include_classifier));
  PruneTrace trace;
  trace.stop_drop = opts.stop_drop;
  trace.initial_accuracy = evaluate_accuracy(state.graph(), state.params(), test);
  trace.metadata["variant"] = std::string(to_string(cfg.variant));
  trace.metadata["metric"] = cfg.metric.name();
  trace.metadata["stop_drop"] = fixed6(opts.stop_drop);
  trace.metadata["initial_accuracy"] = fixed6(trace.initial_accuracy);
  trace.metadata["eval_every"] = std::to_string(opts.eval_every);
  std::string excluded;
  for (const auto& l : state.excluded_layers()) excluded += (excluded.empty() ? "" : ";") + l;
  trace.metadata["excluded_layers"] = excluded;

  const StepInputs in{saliency_batch, &test};
  for (std::size_t it = 1;; ++it) {
    if (state.candidates().empty()) break;
    const bool evaluate = it % opts.eval_every == 0;
    PruneRecord rec = prune_step(state, cfg, in, evaluate, it);
    if (!rec.accuracy && state.candidates().empty()) {
      rec.accuracy = evaluate_accuracy(state.graph(), state.params(), test);
    }
    trace.records.push_back(rec);
    if (rec.accuracy && !within_drop(*rec.accuracy, trace.initial_accuracy, opts.stop_drop)) break;
  }
  if (final_state) *final_state = std::move(state);
  return trace;
}

Dataset make_saliency_batch(const Dataset& train, std::size_t size, std::uint64_t seed) {
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  size = std::min(size, idx.size());
  // Partial Fisher-Yates with an explicit uniform draw keeps the order stable.
  for (std::size_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(size);
  Dataset d = train.gather(idx);
  d.split = "saliency";
  return d;
}

void write_trace_csv(const PruneTrace& trace, std::ostream& out) {
  out << "# domino-trace v1\n";
  for (const auto& [k, v] : trace.metadata) out << "# " << k << "=" << v << "\n";
  out << "iteration,seed_layer,seed_channel,set_size,weights_removed_cum,accuracy\n";
  for (const auto& r : trace.records) {
    out << r.iteration << "," << r.seed.layer << "," << r.seed.index << "," << r.set_size << ","
        << fixed6(r.weights_removed_cum) << "," << (r.accuracy ? fixed6(*r.accuracy) : "NA") << "\n";
  }
}

PruneTrace read_trace_csv(std::istream& in) {
  PruneTrace trace;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    return Error(ErrorCode::ParseError, "trace line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) trace.metadata[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (!header) {
      if (line != "iteration,seed_layer,seed_channel,set_size,weights_removed_cum,accuracy") throw fail("bad header");
      header = true;
      continue;
    }
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
    if (cols.size() != 6) throw fail("expected 6 columns");
    try {
      PruneRecord r;
      r.iteration = std::stoul(cols[0]);
      r.seed = out_ch(cols[1], std::stoul(cols[2]));
      r.set_size = std::stoul(cols[3]);
      r.weights_removed_cum = std::stod(cols[4]);
      if (cols[5] != "NA") r.accuracy = std::stod(cols[5]);
      trace.records.push_back(r);
    } catch (const std::logic_error&) {
      throw fail("malformed number");
    }
  }
  if (!header) throw Error(ErrorCode::ParseError, "trace has no header row");
  try {
    trace.initial_accuracy = std::stod(trace.metadata.at("initial_accuracy"));
    trace.stop_drop = std::stod(trace.metadata.at("stop_drop"));
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "trace metadata lacks initial_accuracy/stop_drop");
  }
  return trace;
}

}  // namespace domino
