#include "domino/saliency.hpp"

#include <cmath>

#include "domino/error.hpp"

namespace domino {

namespace {

const LayerNode& weight_layer(const NetworkGraph& graph, const ChannelRef& ref) {
  const LayerNode& l = graph.layer(ref.layer);
  if (!is_weight_bearing(l.kind)) {
    throw Error(ErrorCode::InvalidArgument, to_string(ref) + " is not on a weight-bearing layer");
  }
  const std::size_t limit = ref.side == Side::Output ? l.out_channels : l.slots();
  if (ref.index >= limit) throw Error(ErrorCode::InvalidArgument, to_string(ref) + " is out of range");
  return l;
}

void check_unpruned(const ChannelRef& ref, const std::set<ChannelRef>& pruned) {
  if (pruned.count(ref)) throw Error(ErrorCode::PrunedChannel, to_string(ref) + " is pruned");
}

// Visits every element index of the slice selected by `ref` in a weight
// tensor of shape m_out x m_in x kh x kw.
template <typename F>
void for_each_in_slice(const std::vector<std::size_t>& dims, const ChannelRef& ref, F&& f) {
  const std::size_t m_in = dims[1], k2 = dims[2] * dims[3];
  if (ref.side == Side::Output) {
    const std::size_t base = ref.index * m_in * k2;
    for (std::size_t e = 0; e < m_in * k2; ++e) f(base + e);
  } else {
    for (std::size_t o = 0; o < dims[0]; ++o) {
      const std::size_t base = (o * m_in + ref.index) * k2;
      for (std::size_t e = 0; e < k2; ++e) f(base + e);
    }
  }
}

double slice_count(const std::vector<std::size_t>& dims, Side side) {
  const double k2 = static_cast<double>(dims[2] * dims[3]);
  return side == Side::Output ? static_cast<double>(dims[1]) * k2 : static_cast<double>(dims[0]) * k2;
}

}  // namespace

std::string_view to_string(BaseMetric m) {
  switch (m) {
    case BaseMetric::L1Weights: return "l1";
    case BaseMetric::TaylorWeights: return "taylor-w";
    case BaseMetric::TaylorFmaps: return "taylor-f";
  }
  return "?";
}

BaseMetric parse_base_metric(std::string_view name) {
  if (name == "l1") return BaseMetric::L1Weights;
  if (name == "taylor-w") return BaseMetric::TaylorWeights;
  if (name == "taylor-f") return BaseMetric::TaylorFmaps;
  throw Error(ErrorCode::InvalidArgument, "unknown metric '" + std::string(name) + "'");
}

std::string MetricConfig::name() const { return std::string(to_string(base)) + (averaged ? "-avg" : ""); }

MetricConfig parse_metric(std::string_view name) {
  MetricConfig m;
  constexpr std::string_view suffix = "-avg";
  if (name.size() > suffix.size() && name.substr(name.size() - suffix.size()) == suffix) {
    m.averaged = true;
    name.remove_suffix(suffix.size());
  }
  m.base = parse_base_metric(name);
  return m;
}

RawSaliency saliency_l1(const NetworkGraph& graph, const TensorStore& params, const ChannelRef& ref,
                        const std::set<ChannelRef>& pruned) {
  check_unpruned(ref, pruned);
  const LayerNode& l = weight_layer(graph, ref);
  const Tensor& w = params.at(l.params.weight);
  double sum = 0.0;
  for_each_in_slice(w.dims(), ref, [&](std::size_t e) { sum += std::fabs(static_cast<double>(w[e])); });
  return {sum, slice_count(w.dims(), ref.side)};
}

RawSaliency saliency_taylor_weights(const NetworkGraph& graph, const TensorStore& params, const BatchResult& grads,
                                    const ChannelRef& ref, const std::set<ChannelRef>& pruned) {
  check_unpruned(ref, pruned);
  const LayerNode& l = weight_layer(graph, ref);
  auto it = grads.grads_w.find(l.params.weight);
  if (!grads.has_grads || it == grads.grads_w.end()) {
    throw Error(ErrorCode::MissingGradients, "no gradient for '" + l.params.weight + "'");
  }
  const Tensor& w = params.at(l.params.weight);
  const Tensor& g = it->second;
  double sum = 0.0;
  for_each_in_slice(w.dims(), ref, [&](std::size_t e) {
    sum += static_cast<double>(w[e]) * static_cast<double>(g[e]);
  });
  return {std::fabs(sum), slice_count(w.dims(), ref.side)};
}

RawSaliency saliency_taylor_fmaps(const BatchResult& r, const ChannelRef& ref, const std::set<ChannelRef>& pruned) {
  check_unpruned(ref, pruned);
  const auto idx = r.graph.find(ref.layer);
  if (!idx || r.activations.size() != r.graph.size() || !r.has_grads) {
    throw Error(ErrorCode::MissingActivations, "no activations/gradients for '" + ref.layer + "'");
  }
  const LayerNode& l = r.graph.layer(*idx);
  if (!is_weight_bearing(l.kind)) throw Error(ErrorCode::InvalidArgument, to_string(ref) + " is not on a weight-bearing layer");

  const Tensor* act;
  const Tensor* grad;
  std::vector<std::size_t> maps;
  if (ref.side == Side::Output) {
    act = &r.activations[*idx];
    grad = &r.grads_a[*idx];
    maps.push_back(ref.index);
  } else {
    act = &r.activations[r.graph.predecessors(*idx).front()];
    grad = &r.grads_in[*idx];
    const std::size_t groups = l.kind == LayerKind::Conv2D ? l.groups : 1;
    for (std::size_t grp = 0; grp < groups; ++grp) maps.push_back(l.channel_of(grp, ref.index));
  }
  if (act->empty() || grad->empty()) throw Error(ErrorCode::MissingActivations, "missing maps for " + to_string(ref));

  double sum = 0.0;
  for (std::size_t n = 0; n < r.batch; ++n) {
    for (std::size_t c : maps) {
      auto a = act->plane(n, c);
      auto g = grad->plane(n, c);
      for (std::size_t e = 0; e < a.size(); ++e) sum += static_cast<double>(a[e]) * static_cast<double>(g[e]);
    }
  }
  const double pixels = static_cast<double>(act->dim(2) * act->dim(3) * maps.size());
  return {std::fabs(sum) / static_cast<double>(r.batch), pixels};
}

double apply_averaging(double raw, double count, bool averaged) {
  if (!averaged) return raw;
  if (count <= 0.0) throw Error(ErrorCode::ZeroCount, "cannot average over zero elements");
  return raw / count;
}

double apply_averaging(std::span<const RawSaliency> parts, bool averaged) {
  double raw = 0.0, count = 0.0;
  for (const auto& p : parts) {
    raw += p.raw;
    count += p.count;
  }
  return apply_averaging(raw, count, averaged);
}

RawSaliencies compute_raw_saliencies(const DependencyGraph& dep, const TensorStore& params,
                                     const MetricConfig& metric, const Dataset* batch,
                                     const std::set<ChannelRef>& pruned) {
  const NetworkGraph& graph = dep.graph();
  BatchResult grads;
  if (metric.needs_gradients()) {
    if (!batch || batch->size() == 0) throw Error(ErrorCode::MissingGradients, metric.name() + " needs a saliency batch");
    grads = backward(graph, params, batch->images, batch->labels);
  }
  auto one = [&](const ChannelRef& ref) -> RawSaliency {
    switch (metric.base) {
      case BaseMetric::L1Weights: return saliency_l1(graph, params, ref);
      case BaseMetric::TaylorWeights: return saliency_taylor_weights(graph, params, grads, ref);
      case BaseMetric::TaylorFmaps: return saliency_taylor_fmaps(grads, ref);
    }
    return {};
  };

  std::set<std::size_t> dead_classes;
  for (const auto& ref : pruned) {
    if (ref.side == Side::Output) dead_classes.insert(dep.class_of(ref));
  }
  RawSaliencies out;
  for (std::size_t cls = 0; cls < dep.class_count(); ++cls) {
    if (dead_classes.count(cls)) continue;
    for (std::size_t o : dep.class_members(cls)) {
      const ChannelRef& ref = dep.outputs()[o];
      if (is_weight_bearing(graph.layer(ref.layer).kind)) out.emplace(ref, one(ref));
    }
    for (std::size_t s : dep.class_siblings(cls)) out.emplace(dep.slots()[s], one(dep.slots()[s]));
  }
  return out;
}

}  // namespace domino
