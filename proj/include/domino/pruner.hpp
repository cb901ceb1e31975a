#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "domino/dataset.hpp"
#include "domino/dependency.hpp"
#include "domino/scoring.hpp"

namespace domino {

struct PruneRecord {
  std::size_t iteration = 0;
  ChannelRef seed;
  std::size_t set_size = 0;             // output channels pruned this step
  double weights_removed_cum = 0.0;     // fraction of convolution weights zeroed
  std::optional<double> accuracy;       // absent on iterations skipped by eval-every

  bool operator==(const PruneRecord&) const = default;
};

struct PruneTrace {
  std::map<std::string, std::string> metadata;
  double initial_accuracy = 0.0;
  double stop_drop = 5.0;  // percentage points
  std::vector<PruneRecord> records;
};

/// Layers whose output channels are never pruning seeds: the classifier
/// feeding the loss, unless `include_classifier` is set.
std::set<std::string> never_prune_guard(const NetworkGraph& graph, bool include_classifier = false);

/// Mutable pruning state over a fixed topology. Parameters are zeroed in
/// place; the topology never changes.
class PruneState {
public:
  PruneState(const NetworkGraph& graph, TensorStore params, std::set<std::string> excluded_layers);

  const DependencyGraph& dependency() const noexcept { return dep_; }
  const NetworkGraph& graph() const noexcept { return dep_.graph(); }
  const TensorStore& params() const noexcept { return params_; }
  const std::set<ChannelRef>& pruned_mask() const noexcept { return pruned_; }
  const std::set<ChannelRef>& pruned_slots() const noexcept { return pruned_slots_; }
  const std::set<std::string>& excluded_layers() const noexcept { return excluded_; }

  /// Unpruned output channels whose whole coparent class may be pruned.
  std::vector<ChannelRef> candidates() const;

  /// Zeroes every slice and registered parameter of `pset`.
  /// Throws OverlapWithPruned.
  void apply_prune(const PruneSet& pset);

  /// Zeroed convolution weights over all convolution weights, recomputed from
  /// the masks. Falls back to fully-connected weights for conv-free nets.
  double weights_removed() const;

  /// Channels and slots pruned so far, as a prune set per applied step.
  const std::vector<PruneSet>& history() const noexcept { return history_; }

private:
  DependencyGraph dep_;
  TensorStore params_;
  std::set<std::string> excluded_;
  std::set<ChannelRef> pruned_;
  std::set<ChannelRef> pruned_slots_;
  std::vector<PruneSet> history_;
};

/// Lowest score wins; ties go to the lexicographically smallest
/// (layer id, channel index). Returns nullopt for an empty vector.
std::optional<ChannelRef> select_min(const SaliencyVector& scores);

struct StepInputs {
  const Dataset* saliency_batch = nullptr;  // required by Taylor metrics
  const Dataset* test = nullptr;            // required when evaluating
};

/// One iteration: score every candidate, prune the argmin's full prune set and
/// optionally evaluate. Throws NothingLeftToPrune.
PruneRecord prune_step(PruneState& state, const DominoConfig& cfg, const StepInputs& in, bool evaluate,
                       std::size_t iteration);

/// accuracy >= initial - stop_drop / 100, with stop_drop in percentage points.
/// A 1e-9 slack absorbs decimal rounding of accuracies read back from CSV.
inline bool within_drop(double accuracy, double initial, double stop_drop) {
  return accuracy >= initial - stop_drop / 100.0 - 1e-9;
}

struct CampaignOptions {
  double stop_drop = 5.0;        // absolute percentage points below the initial accuracy
  std::size_t eval_every = 1;
  bool include_classifier = false;
};

/// Prunes until accuracy < initial - stop_drop (on an evaluated iteration) or
/// no candidate remains. The stopping record is kept in the trace.
PruneTrace run_campaign(const NetworkGraph& graph, const TensorStore& params, const DominoConfig& cfg,
                        const Dataset& test, const Dataset* saliency_batch, const CampaignOptions& opts,
                        PruneState* final_state = nullptr);

/// Deterministic saliency batch: `size` items drawn without replacement from
/// `train` with a seeded generator, kept in draw order.
Dataset make_saliency_batch(const Dataset& train, std::size_t size, std::uint64_t seed);

/// Trace CSV: '#'-prefixed metadata lines, then
/// iteration,seed_layer,seed_channel,set_size,weights_removed_cum,accuracy
void write_trace_csv(const PruneTrace& trace, std::ostream& out);
/// Throws ParseError.
PruneTrace read_trace_csv(std::istream& in);

}  // namespace domino
