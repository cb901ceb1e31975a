#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>

#include "domino/saliency.hpp"

namespace domino {

/// Channel: the seed's own saliency. DominoO: summed over the coparent
/// closure. DominoIO: coparents plus the sibling input slots.
enum class Variant { Channel, DominoO, DominoIO };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);

struct DominoConfig {
  Variant variant = Variant::Channel;
  MetricConfig metric;

  /// "domino-io_l1-avg"
  std::string name() const { return std::string(to_string(variant)) + "_" + metric.name(); }
};

struct ChannelScore {
  double raw = 0.0;    // summed raw saliency of the scored slices
  double count = 0.0;  // summed element counts
  double score = 0.0;  // raw, or raw / count under -avg
};

/// Scores of unpruned output channels in prunable coparent classes.
using SaliencyVector = std::map<ChannelRef, ChannelScore>;

/// Throws PrunedChannel, IncompleteClosure.
ChannelScore score_channel(const DependencyGraph& dep, const RawSaliencies& raw, const ChannelRef& c,
                           const DominoConfig& cfg, const std::set<ChannelRef>& pruned = {});

/// One score per unpruned output channel of every prunable class. Members of a
/// class share one DominoO/DominoIO value, computed once per class.
SaliencyVector score_all(const DependencyGraph& dep, const RawSaliencies& raw, const DominoConfig& cfg,
                         const std::set<ChannelRef>& pruned = {});

}  // namespace domino
