#include "domino/dependency.hpp"

#include <algorithm>

#include "domino/error.hpp"
#include "domino/union_find.hpp"

namespace domino {

namespace {

bool is_producer(LayerKind kind) { return kind == LayerKind::Input || is_weight_bearing(kind); }

bool is_pass_through(LayerKind kind) { return kind == LayerKind::EltwiseAdd || kind == LayerKind::Flatten; }

template <typename T>
void sort_unique(std::vector<T>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

}  // namespace

std::string to_string(const ChannelRef& ref) {
  return (ref.side == Side::Output ? "out(" : "in(") + ref.layer + "," + std::to_string(ref.index) + ")";
}

DependencyGraph::DependencyGraph(const NetworkGraph& absorbed)
    : graph_(absorbed.absorbed() ? absorbed : absorb_activations(absorbed)) {
  const auto& layers = graph_.layers();
  for (const LayerNode& l : layers) {
    if (is_producer(l.kind)) {
      out_base_[l.id] = outputs_.size();
      for (std::size_t i = 0; i < l.out_channels; ++i) outputs_.push_back(out_ch(l.id, i));
    }
    if (is_weight_bearing(l.kind)) {
      slot_base_[l.id] = slots_.size();
      for (std::size_t j = 0; j < l.slots(); ++j) slots_.push_back(in_slot(l.id, j));
    }
  }

  // Pass-through channels (join or flatten, channel index) reached by each output.
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> through;
  succ_.assign(outputs_.size(), {});
  slot_producers_.assign(slots_.size(), {});
  for (std::size_t o = 0; o < outputs_.size(); ++o) {
    const std::size_t channel = outputs_[o].index;
    std::vector<std::size_t> stack = {graph_.index_of(outputs_[o].layer)};
    std::vector<bool> seen(layers.size());
    while (!stack.empty()) {
      const std::size_t n = stack.back();
      stack.pop_back();
      for (std::size_t c : graph_.consumers(n)) {
        const LayerNode& consumer = layers[c];
        if (is_weight_bearing(consumer.kind)) {
          succ_[o].push_back(slot_base_.at(consumer.id) + consumer.slot_of_channel(channel));
        } else if (is_pass_through(consumer.kind) && !seen[c]) {
          seen[c] = true;
          through[{c, channel}].push_back(o);
          stack.push_back(c);
        }
      }
    }
    sort_unique(succ_[o]);
    for (std::size_t s : succ_[o]) slot_producers_[s].push_back(o);
  }

  UnionFind uf(outputs_.size());
  for (const auto& producers : slot_producers_) {
    for (std::size_t k = 1; k < producers.size(); ++k) uf.unite(producers[0], producers[k]);
  }
  for (const auto& [key, producers] : through) {
    for (std::size_t k = 1; k < producers.size(); ++k) uf.unite(producers[0], producers[k]);
  }

  std::map<std::size_t, std::size_t> root_to_class;
  class_of_.resize(outputs_.size());
  for (std::size_t o = 0; o < outputs_.size(); ++o) {
    auto [it, fresh] = root_to_class.emplace(uf.find(o), classes_.size());
    if (fresh) classes_.emplace_back();
    class_of_[o] = it->second;
    ChannelClass& cls = classes_[it->second];
    cls.members.push_back(o);
    cls.siblings.insert(cls.siblings.end(), succ_[o].begin(), succ_[o].end());
    const LayerNode& producer = graph_.layer(outputs_[o].layer);
    if (!is_weight_bearing(producer.kind)) cls.prunable = false;
    if (!producer.params.bias.empty()) cls.bias.push_back({producer.params.bias, outputs_[o].index});
  }

  std::multimap<std::string, std::string> registered_by_anchor;
  for (const auto& r : graph_.registered_params()) registered_by_anchor.emplace(r.anchor, r.tensor);
  auto register_channel = [&](ChannelClass& cls, const std::string& anchor, std::size_t channel) {
    auto [lo, hi] = registered_by_anchor.equal_range(anchor);
    for (auto it = lo; it != hi; ++it) cls.bias.push_back({it->second, channel});
  };
  for (std::size_t o = 0; o < outputs_.size(); ++o) {
    register_channel(classes_[class_of_[o]], outputs_[o].layer, outputs_[o].index);
  }
  for (const auto& [key, producers] : through) {
    register_channel(classes_[class_of_[producers.front()]], layers[key.first].id, key.second);
  }
  for (auto& cls : classes_) {
    sort_unique(cls.siblings);
    sort_unique(cls.bias);
  }
}

std::size_t DependencyGraph::output_id(const ChannelRef& ref) const {
  auto it = out_base_.find(ref.layer);
  if (ref.side != Side::Output || it == out_base_.end() ||
      ref.index >= graph_.layer(ref.layer).out_channels) {
    throw Error(ErrorCode::InvalidArgument, to_string(ref) + " is not an output channel");
  }
  return it->second + ref.index;
}

std::size_t DependencyGraph::slot_id(const ChannelRef& ref) const {
  auto it = slot_base_.find(ref.layer);
  if (ref.side != Side::InputSlot || it == slot_base_.end() || ref.index >= graph_.layer(ref.layer).slots()) {
    throw Error(ErrorCode::InvalidArgument, to_string(ref) + " is not an input slot");
  }
  return it->second + ref.index;
}

std::vector<ChannelRef> DependencyGraph::succ(const ChannelRef& output) const {
  std::vector<ChannelRef> refs;
  for (std::size_t s : succ_[output_id(output)]) refs.push_back(slots_[s]);
  return refs;
}

std::vector<ChannelRef> DependencyGraph::slot_producers(const ChannelRef& slot) const {
  std::vector<ChannelRef> refs;
  for (std::size_t o : slot_producers_[slot_id(slot)]) refs.push_back(outputs_[o]);
  return refs;
}

std::size_t DependencyGraph::class_of(const ChannelRef& output) const { return class_of_[output_id(output)]; }

DependencyGraph build_dependency(const NetworkGraph& graph) { return DependencyGraph(graph); }

std::set<ChannelRef> coparents_closure(const DependencyGraph& dep, const ChannelRef& seed) {
  std::set<ChannelRef> out;
  for (std::size_t o : dep.class_members(dep.class_of(seed))) out.insert(dep.outputs()[o]);
  return out;
}

std::set<ChannelRef> siblings_closure(const DependencyGraph& dep, const ChannelRef& seed) {
  std::set<ChannelRef> out;
  for (std::size_t s : dep.class_siblings(dep.class_of(seed))) out.insert(dep.slots()[s]);
  return out;
}

PruneSet prune_set(const DependencyGraph& dep, const ChannelRef& seed, const std::set<ChannelRef>& pruned) {
  if (pruned.count(seed)) throw Error(ErrorCode::AlreadyPruned, to_string(seed) + " is already pruned");
  const std::size_t cls = dep.class_of(seed);
  PruneSet ps;
  ps.seed = seed;
  for (std::size_t o : dep.class_members(cls)) {
    const ChannelRef& ref = dep.outputs()[o];
    ps.coparents.insert(ref);
    if (is_weight_bearing(dep.graph().layer(ref.layer).kind)) ps.weight_slices.push_back({ref.layer, 0, ref.index});
  }
  for (std::size_t s : dep.class_siblings(cls)) {
    const ChannelRef& ref = dep.slots()[s];
    ps.siblings.insert(ref);
    ps.weight_slices.push_back({ref.layer, 1, ref.index});
  }
  sort_unique(ps.weight_slices);
  ps.bias_params = dep.class_bias_params(cls);
  return ps;
}

PruneSet oracle_prune_set(const NetworkGraph& input, const ChannelRef& seed) {
  const NetworkGraph graph = expand_absorbed(input);
  const auto& layers = graph.layers();

  // marked_map[layer][i]: output feature map i of the layer is zero.
  // marked_slot[layer][j]: input slot j of a weight-bearing layer is dead.
  std::vector<std::vector<char>> marked_map(layers.size()), marked_slot(layers.size());
  for (std::size_t n = 0; n < layers.size(); ++n) {
    marked_map[n].assign(layers[n].out_channels, 0);
    if (is_weight_bearing(layers[n].kind)) marked_slot[n].assign(layers[n].slots(), 0);
  }
  const std::size_t seed_layer = graph.index_of(seed.layer);
  marked_map.at(seed_layer).at(seed.index) = 1;

  // Each rule is an equivalence: if either side is marked, mark both.
  auto link = [](char& a, char& b) {
    if (a != b) {
      a = b = 1;
      return true;
    }
    return false;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t n = 0; n < layers.size(); ++n) {
      const LayerNode& node = layers[n];
      const auto& preds = graph.predecessors(n);
      switch (node.kind) {
        case LayerKind::ReLU:
        case LayerKind::BatchNorm:
        case LayerKind::Bias:
        case LayerKind::MaxPool:
        case LayerKind::AvgPool:
        case LayerKind::GlobalAvgPool:
        case LayerKind::Flatten:
        case LayerKind::EltwiseAdd:
          for (std::size_t p : preds) {
            for (std::size_t i = 0; i < node.out_channels; ++i) changed |= link(marked_map[p][i], marked_map[n][i]);
          }
          break;
        case LayerKind::Conv2D:
        case LayerKind::FullyConnected: {
          const std::size_t p = preds.front();
          for (std::size_t c = 0; c < node.in_channels; ++c) {
            changed |= link(marked_map[p][c], marked_slot[n][node.slot_of_channel(c)]);
          }
          break;
        }
        case LayerKind::Input:
        case LayerKind::SoftmaxLoss:
          break;
      }
    }
  }

  PruneSet ps;
  ps.seed = seed;
  for (std::size_t n = 0; n < layers.size(); ++n) {
    const LayerNode& node = layers[n];
    for (std::size_t i = 0; i < marked_map[n].size(); ++i) {
      if (!marked_map[n][i]) continue;
      if (node.kind == LayerKind::Input) ps.coparents.insert(out_ch(node.id, i));
      if (is_weight_bearing(node.kind)) {
        ps.coparents.insert(out_ch(node.id, i));
        ps.weight_slices.push_back({node.id, 0, i});
      }
      if (is_weight_bearing(node.kind) || node.kind == LayerKind::BatchNorm || node.kind == LayerKind::Bias) {
        for (const auto& ref : node.channel_param_refs()) ps.bias_params.push_back({ref, i});
      }
    }
    for (std::size_t j = 0; j < marked_slot[n].size(); ++j) {
      if (!marked_slot[n][j]) continue;
      ps.siblings.insert(in_slot(node.id, j));
      ps.weight_slices.push_back({node.id, 1, j});
    }
  }
  sort_unique(ps.weight_slices);
  sort_unique(ps.bias_params);
  return ps;
}

}  // namespace domino
