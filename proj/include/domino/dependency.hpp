#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "domino/graph.hpp"

namespace domino {

enum class Side { Output, InputSlot };

/// One channel position: output channel i of a layer, or input slot j of a
/// weight-bearing layer (the j-th index of axis 1 of its weight tensor).
struct ChannelRef {
  std::string layer;
  Side side = Side::Output;
  std::size_t index = 0;

  auto operator<=>(const ChannelRef&) const = default;
};

std::string to_string(const ChannelRef& ref);

inline ChannelRef out_ch(std::string layer, std::size_t i) { return {std::move(layer), Side::Output, i}; }
inline ChannelRef in_slot(std::string layer, std::size_t j) { return {std::move(layer), Side::InputSlot, j}; }

/// Weight slice W[index,:,:,:] (axis 0) or W[:,index,:,:] (axis 1).
struct WeightSlice {
  std::string layer;
  int axis = 0;
  std::size_t index = 0;

  auto operator<=>(const WeightSlice&) const = default;
};

/// Element `index` of a per-channel parameter tensor.
struct BiasParam {
  std::string tensor;
  std::size_t index = 0;

  auto operator<=>(const BiasParam&) const = default;
};

/// Everything that is zeroed when the seed channel is pruned.
struct PruneSet {
  ChannelRef seed;
  std::set<ChannelRef> coparents;
  std::set<ChannelRef> siblings;
  std::vector<WeightSlice> weight_slices;  // sorted, unique
  std::vector<BiasParam> bias_params;      // sorted, unique

  /// Same pruned content, regardless of which member seeded it.
  bool same_content(const PruneSet& o) const {
    return coparents == o.coparents && siblings == o.siblings && weight_slices == o.weight_slices &&
           bias_params == o.bias_params;
  }
};

/// Channel-level successor relation over an absorbed graph.
///
/// Output nodes are the channels of Input, Conv2D and FullyConnected layers;
/// input-slot nodes are the axis-1 indices of Conv2D/FullyConnected weights.
/// succ(o) is every slot that reads o, following EltwiseAdd and Flatten
/// transparently. For a grouped convolution all groups share a slot index, so
/// producer channels mapping to the same slot share a successor.
///
/// Coparent classes are computed once with union-find: producers of a common
/// slot are united, as are producers meeting at the same join channel.
class DependencyGraph {
public:
  explicit DependencyGraph(const NetworkGraph& absorbed);

  const NetworkGraph& graph() const noexcept { return graph_; }

  std::size_t output_count() const noexcept { return outputs_.size(); }
  std::size_t slot_count() const noexcept { return slots_.size(); }
  const std::vector<ChannelRef>& outputs() const noexcept { return outputs_; }
  const std::vector<ChannelRef>& slots() const noexcept { return slots_; }

  std::size_t output_id(const ChannelRef& ref) const;
  std::size_t slot_id(const ChannelRef& ref) const;

  std::vector<ChannelRef> succ(const ChannelRef& output) const;
  std::vector<ChannelRef> slot_producers(const ChannelRef& slot) const;

  std::size_t class_count() const noexcept { return classes_.size(); }
  std::size_t class_of(const ChannelRef& output) const;
  const std::vector<std::size_t>& class_members(std::size_t cls) const { return classes_.at(cls).members; }
  const std::vector<std::size_t>& class_siblings(std::size_t cls) const { return classes_.at(cls).siblings; }
  /// True when every member is a channel of a weight-bearing layer.
  bool class_prunable(std::size_t cls) const { return classes_.at(cls).prunable; }

  /// Per-channel parameters registered against a class (layer biases,
  /// absorbed BatchNorm/Bias entries), sorted.
  const std::vector<BiasParam>& class_bias_params(std::size_t cls) const { return classes_.at(cls).bias; }

private:
  struct ChannelClass {
    std::vector<std::size_t> members;   // output ids, ascending
    std::vector<std::size_t> siblings;  // slot ids, ascending
    std::vector<BiasParam> bias;
    bool prunable = true;
  };

  NetworkGraph graph_;
  std::vector<ChannelRef> outputs_;
  std::vector<ChannelRef> slots_;
  std::map<std::string, std::size_t> out_base_;
  std::map<std::string, std::size_t> slot_base_;
  std::vector<std::vector<std::size_t>> succ_;            // output id -> slot ids
  std::vector<std::vector<std::size_t>> slot_producers_;  // slot id -> output ids
  std::vector<std::size_t> class_of_;
  std::vector<ChannelClass> classes_;
};

/// Convenience: absorbs `graph` if needed and builds the relation.
DependencyGraph build_dependency(const NetworkGraph& graph);

std::set<ChannelRef> coparents_closure(const DependencyGraph& dep, const ChannelRef& seed);
std::set<ChannelRef> siblings_closure(const DependencyGraph& dep, const ChannelRef& seed);

/// Throws AlreadyPruned if `seed` is in `pruned`.
PruneSet prune_set(const DependencyGraph& dep, const ChannelRef& seed, const std::set<ChannelRef>& pruned = {});

/// Test oracle: marks the seed's feature map on the un-absorbed graph and
/// propagates the zero predicate through every layer rule by brute-force
/// fixpoint iteration. Shares no code with DependencyGraph.
PruneSet oracle_prune_set(const NetworkGraph& graph, const ChannelRef& seed);

}  // namespace domino
