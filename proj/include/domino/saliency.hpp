#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>

#include "domino/dataset.hpp"
#include "domino/dependency.hpp"
#include "domino/engine.hpp"

namespace domino {

enum class BaseMetric { L1Weights, TaylorWeights, TaylorFmaps };

std::string_view to_string(BaseMetric m);
BaseMetric parse_base_metric(std::string_view name);

struct MetricConfig {
  BaseMetric base = BaseMetric::L1Weights;
  bool averaged = false;
  std::size_t saliency_batch = 256;

  bool needs_gradients() const { return base != BaseMetric::L1Weights; }
  /// "l1", "taylor-w-avg", ...
  std::string name() const;
};

/// Parses "l1", "taylor-w", "taylor-f", each optionally suffixed "-avg".
MetricConfig parse_metric(std::string_view name);

/// Un-normalised saliency of one slice and the number of elements it covers.
struct RawSaliency {
  double raw = 0.0;
  double count = 0.0;
};

/// Sum of |W| over W[i,:,:,:] (output channel) or W[:,j,:,:] (input slot).
/// Throws PrunedChannel when `ref` is in `pruned`.
RawSaliency saliency_l1(const NetworkGraph& graph, const TensorStore& params, const ChannelRef& ref,
                        const std::set<ChannelRef>& pruned = {});

/// |sum w * dL/dw| over the same slice as saliency_l1. Throws MissingGradients.
RawSaliency saliency_taylor_weights(const NetworkGraph& graph, const TensorStore& params, const BatchResult& grads,
                                    const ChannelRef& ref, const std::set<ChannelRef>& pruned = {});

/// |sum over batch and pixels of a * dL/da| / batch size, where a is the
/// layer's output map i (Output side) or the maps feeding slot j (InputSlot
/// side). The count is the number of pixels covered per item.
/// Throws MissingActivations.
RawSaliency saliency_taylor_fmaps(const BatchResult& acts_grads, const ChannelRef& ref,
                                  const std::set<ChannelRef>& pruned = {});

/// raw / count when averaged, raw otherwise. Throws ZeroCount.
double apply_averaging(double raw, double count, bool averaged);
/// Combined slices average as sum(raw) / sum(count).
double apply_averaging(std::span<const RawSaliency> parts, bool averaged);

/// Raw saliency of every unpruned weight-bearing output channel and input slot.
using RawSaliencies = std::map<ChannelRef, RawSaliency>;

/// Computes base saliencies for all channels under `metric`. Taylor metrics
/// run one backward pass over `batch`.
RawSaliencies compute_raw_saliencies(const DependencyGraph& dep, const TensorStore& params,
                                     const MetricConfig& metric, const Dataset* batch,
                                     const std::set<ChannelRef>& pruned = {});

}  // namespace domino
