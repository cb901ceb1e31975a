#include "domino/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include "domino/error.hpp"

namespace domino {

namespace {

struct KindName {
  LayerKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::Input, "Input"},
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::FullyConnected, "FullyConnected"},
    {LayerKind::EltwiseAdd, "EltwiseAdd"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::Bias, "Bias"},
    {LayerKind::MaxPool, "MaxPool"},
    {LayerKind::AvgPool, "AvgPool"},
    {LayerKind::GlobalAvgPool, "GlobalAvgPool"},
    {LayerKind::Flatten, "Flatten"},
    {LayerKind::SoftmaxLoss, "SoftmaxLoss"},
};

void require_param(const TensorStore& store, const LayerNode& node, const std::string& ref,
                   const std::vector<std::size_t>& dims, std::string_view role) {
  if (ref.empty()) {
    throw Error(ErrorCode::DanglingTensorRef,
                "layer '" + node.id + "' has no " + std::string(role) + " tensor");
  }
  if (!store.contains(ref)) {
    throw Error(ErrorCode::DanglingTensorRef,
                "layer '" + node.id + "' references missing tensor '" + ref + "'");
  }
  const auto& t = store.at(ref);
  if (t.dims() != dims) {
    throw Error(ErrorCode::ShapeMismatch, "layer '" + node.id + "' " + std::string(role) + " '" +
                                              ref + "' is " + shape_string(t.dims()) +
                                              ", expected " + shape_string(dims));
  }
}

void resolve_shape(LayerNode& node, const std::vector<const LayerNode*>& producers,
                   const TensorStore& store) {
  auto mismatch = [&](const LayerNode& other, const std::string& why) {
    return Error(ErrorCode::ShapeMismatch, "layers '" + other.id + "' and '" + node.id + "': " + why);
  };

  if (node.kind == LayerKind::Input) {
    if (node.out_channels == 0 || node.out_height == 0 || node.out_width == 0) {
      throw Error(ErrorCode::ShapeMismatch, "input '" + node.id + "' needs positive channels/height/width");
    }
    node.in_channels = node.out_channels;
    node.in_height = node.out_height;
    node.in_width = node.out_width;
    return;
  }

  const LayerNode& src = *producers.front();
  if (node.in_channels != 0 && node.in_channels != src.out_channels) {
    throw mismatch(src, "declared " + std::to_string(node.in_channels) + " input channels, producer has " +
                            std::to_string(src.out_channels));
  }
  node.in_channels = src.out_channels;
  node.in_height = src.out_height;
  node.in_width = src.out_width;

  switch (node.kind) {
    case LayerKind::Conv2D: {
      if (node.out_channels == 0 || node.kernel == 0 || node.stride == 0 || node.groups == 0) {
        throw Error(ErrorCode::ShapeMismatch, "conv '" + node.id + "' has a zero dimension");
      }
      if (node.out_channels % node.groups != 0 || node.in_channels % node.groups != 0) {
        throw mismatch(src, "channels not divisible by groups=" + std::to_string(node.groups));
      }
      const std::size_t h = node.in_height + 2 * node.pad;
      const std::size_t w = node.in_width + 2 * node.pad;
      if (h < node.kernel || w < node.kernel) throw mismatch(src, "kernel larger than padded input");
      node.out_height = (h - node.kernel) / node.stride + 1;
      node.out_width = (w - node.kernel) / node.stride + 1;
      require_param(store, node, node.params.weight, node.weight_dims(), "weight");
      if (!node.params.bias.empty()) require_param(store, node, node.params.bias, {node.out_channels}, "bias");
      break;
    }
    case LayerKind::FullyConnected:
      if (node.out_channels == 0) throw Error(ErrorCode::ShapeMismatch, "fc '" + node.id + "' has no outputs");
      node.out_height = node.out_width = 1;
      require_param(store, node, node.params.weight, node.weight_dims(), "weight");
      if (!node.params.bias.empty()) require_param(store, node, node.params.bias, {node.out_channels}, "bias");
      break;
    case LayerKind::EltwiseAdd:
      for (const LayerNode* p : producers) {
        if (p->out_channels != src.out_channels) {
          throw Error(ErrorCode::JoinArityMismatch,
                      "join '" + node.id + "' combines " + std::to_string(src.out_channels) + " channels ('" +
                          src.id + "') with " + std::to_string(p->out_channels) + " ('" + p->id + "')");
        }
        if (p->out_height != src.out_height || p->out_width != src.out_width) {
          throw Error(ErrorCode::ShapeMismatch, "layers '" + src.id + "' and '" + p->id +
                                                    "' have different spatial shapes at join '" + node.id + "'");
        }
      }
      node.out_channels = src.out_channels;
      node.out_height = src.out_height;
      node.out_width = src.out_width;
      break;
    case LayerKind::ReLU:
    case LayerKind::Flatten:
      node.out_channels = src.out_channels;
      node.out_height = src.out_height;
      node.out_width = src.out_width;
      break;
    case LayerKind::BatchNorm:
      node.out_channels = src.out_channels;
      node.out_height = src.out_height;
      node.out_width = src.out_width;
      require_param(store, node, node.params.scale, {node.out_channels}, "scale");
      require_param(store, node, node.params.shift, {node.out_channels}, "shift");
      require_param(store, node, node.params.mean, {node.out_channels}, "mean");
      require_param(store, node, node.params.var, {node.out_channels}, "var");
      break;
    case LayerKind::Bias:
      node.out_channels = src.out_channels;
      node.out_height = src.out_height;
      node.out_width = src.out_width;
      require_param(store, node, node.params.bias, {node.out_channels}, "bias");
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      if (node.kernel == 0 || node.stride == 0) throw Error(ErrorCode::ShapeMismatch, "pool '" + node.id + "' has a zero dimension");
      if (node.in_height < node.kernel || node.in_width < node.kernel) throw mismatch(src, "pool window larger than input");
      node.out_channels = src.out_channels;
      node.out_height = (node.in_height - node.kernel) / node.stride + 1;
      node.out_width = (node.in_width - node.kernel) / node.stride + 1;
      break;
    case LayerKind::GlobalAvgPool:
      node.out_channels = src.out_channels;
      node.out_height = node.out_width = 1;
      break;
    case LayerKind::SoftmaxLoss:
      if (src.out_height != 1 || src.out_width != 1) throw mismatch(src, "loss expects 1x1 logits");
      node.out_channels = src.out_channels;
      node.out_height = node.out_width = 1;
      break;
    case LayerKind::Input:
      break;
  }
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

LayerKind parse_layer_kind(std::string_view name) {
  for (const auto& kn : kKindNames) {
    if (kn.name == name) return kn.kind;
  }
  throw Error(ErrorCode::UnsupportedLayer, "layer kind '" + std::string(name) + "' is not supported");
}

std::string_view to_string(GroupMapping mapping) {
  return mapping == GroupMapping::Interleaved ? "interleaved" : "blocked";
}

GroupMapping parse_group_mapping(std::string_view name) {
  if (name == "interleaved") return GroupMapping::Interleaved;
  if (name == "blocked") return GroupMapping::Blocked;
  throw Error(ErrorCode::ParseError, "unknown group mapping '" + std::string(name) + "'");
}

bool is_weight_bearing(LayerKind kind) {
  return kind == LayerKind::Conv2D || kind == LayerKind::FullyConnected;
}

bool is_absorbable(LayerKind kind) {
  switch (kind) {
    case LayerKind::ReLU:
    case LayerKind::BatchNorm:
    case LayerKind::Bias:
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
    case LayerKind::GlobalAvgPool:
      return true;
    default:
      return false;
  }
}

std::size_t LayerNode::slots() const {
  if (kind == LayerKind::Conv2D) return in_channels / groups;
  return in_channels;
}

std::size_t LayerNode::group_of_output(std::size_t out_channel) const {
  return out_channel / (out_channels / groups);
}

std::size_t LayerNode::slot_of_channel(std::size_t in_channel) const {
  if (kind != LayerKind::Conv2D || groups == 1) return in_channel;
  return mapping == GroupMapping::Interleaved ? in_channel % slots() : in_channel / groups;
}

std::size_t LayerNode::channel_of(std::size_t group, std::size_t slot) const {
  if (kind != LayerKind::Conv2D || groups == 1) return slot;
  return mapping == GroupMapping::Interleaved ? group * slots() + slot : slot * groups + group;
}

std::vector<std::size_t> LayerNode::weight_dims() const {
  if (kind == LayerKind::Conv2D) return {out_channels, slots(), kernel, kernel};
  if (kind == LayerKind::FullyConnected) return {out_channels, in_channels, in_height, in_width};
  return {};
}

std::vector<std::string> LayerNode::channel_param_refs() const {
  std::vector<std::string> refs;
  for (const std::string* r : {&params.bias, &params.scale, &params.shift, &params.mean, &params.var}) {
    if (!r->empty()) refs.push_back(*r);
  }
  return refs;
}

const LayerNode& NetworkGraph::layer(const std::string& id) const { return layers_.at(index_of(id)); }

std::optional<std::size_t> NetworkGraph::find(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t NetworkGraph::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, "no layer '" + id + "'");
  return it->second;
}

std::size_t NetworkGraph::count(LayerKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(layers_.begin(), layers_.end(), [&](const LayerNode& l) { return l.kind == kind; }));
}

void NetworkGraph::index_layers() {
  index_.clear();
  for (std::size_t i = 0; i < layers_.size(); ++i) index_[layers_[i].id] = i;
  preds_.assign(layers_.size(), {});
  consumers_.assign(layers_.size(), {});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (const auto& in : layers_[i].inputs) {
      const std::size_t p = index_.at(in);
      preds_[i].push_back(p);
      consumers_[p].push_back(i);
    }
    if (layers_[i].kind == LayerKind::Input) input_ = i;
    if (layers_[i].kind == LayerKind::SoftmaxLoss) loss_ = i;
  }
}

NetworkGraph build_graph(std::vector<LayerNode> layers, const TensorStore& store) {
  std::map<std::string, std::size_t> decl;
  std::size_t inputs = 0, losses = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (!decl.emplace(layers[i].id, i).second) {
      throw Error(ErrorCode::ParseError, "duplicate layer id '" + layers[i].id + "'");
    }
    inputs += layers[i].kind == LayerKind::Input;
    losses += layers[i].kind == LayerKind::SoftmaxLoss;
  }
  if (inputs != 1) throw Error(ErrorCode::ParseError, "expected exactly one Input layer");
  if (losses != 1) throw Error(ErrorCode::ParseError, "expected exactly one SoftmaxLoss layer");

  for (const auto& l : layers) {
    const std::size_t n = l.inputs.size();
    if (l.kind == LayerKind::Input && n != 0) throw Error(ErrorCode::ParseError, "input '" + l.id + "' has predecessors");
    if (l.kind == LayerKind::EltwiseAdd && n < 2) {
      throw Error(ErrorCode::JoinArityMismatch, "join '" + l.id + "' needs at least two inputs");
    }
    if (l.kind != LayerKind::Input && l.kind != LayerKind::EltwiseAdd && n != 1) {
      throw Error(ErrorCode::ParseError, "layer '" + l.id + "' needs exactly one input");
    }
    if (l.kind != LayerKind::Conv2D && l.groups != 1) {
      throw Error(ErrorCode::ParseError, "layer '" + l.id + "' is not a convolution but has groups");
    }
    for (const auto& in : l.inputs) {
      if (!decl.count(in)) throw Error(ErrorCode::ParseError, "layer '" + l.id + "' reads unknown layer '" + in + "'");
    }
  }

  // Kahn's algorithm, always taking the earliest-declared ready layer.
  std::vector<std::size_t> indegree(layers.size());
  std::vector<std::vector<std::size_t>> out(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (const auto& in : layers[i].inputs) {
      out[decl.at(in)].push_back(i);
      ++indegree[i];
    }
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (indegree[i] == 0) ready.push(i);
  }
  std::vector<std::size_t> order;
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (std::size_t c : out[i]) {
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (order.size() != layers.size()) {
    std::string stuck;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (indegree[i] != 0) stuck += (stuck.empty() ? "" : ", ") + layers[i].id;
    }
    throw Error(ErrorCode::CycleDetected, "cycle through {" + stuck + "}");
  }

  NetworkGraph g;
  g.layers_.reserve(layers.size());
  for (std::size_t i : order) g.layers_.push_back(std::move(layers[i]));
  g.index_layers();
  for (std::size_t i = 0; i < g.layers_.size(); ++i) {
    std::vector<const LayerNode*> producers;
    for (std::size_t p : g.preds_[i]) producers.push_back(&g.layers_[p]);
    resolve_shape(g.layers_[i], producers, store);
  }
  return g;
}

NetworkGraph absorb_activations(const NetworkGraph& graph) {
  NetworkGraph result;
  result.absorbed_ = true;
  std::set<RegisteredParam> registered(graph.registered_.begin(), graph.registered_.end());

  auto anchor_of = [&](std::size_t i) {
    while (is_absorbable(graph.layers_[i].kind)) i = graph.preds_[i].front();
    return i;
  };

  for (std::size_t i = 0; i < graph.layers_.size(); ++i) {
    const LayerNode& node = graph.layers_[i];
    switch (node.kind) {
      case LayerKind::ReLU:
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
      case LayerKind::GlobalAvgPool:
        continue;
      case LayerKind::BatchNorm:
      case LayerKind::Bias: {
        const std::string& anchor = graph.layers_[anchor_of(i)].id;
        for (const auto& ref : node.channel_param_refs()) registered.insert({anchor, ref});
        continue;
      }
      case LayerKind::Input:
      case LayerKind::Conv2D:
      case LayerKind::FullyConnected:
      case LayerKind::EltwiseAdd:
      case LayerKind::Flatten:
      case LayerKind::SoftmaxLoss:
        break;
      default:
        throw Error(ErrorCode::UnsupportedActivation, "cannot absorb layer '" + node.id + "'");
    }

    LayerNode kept = node;
    kept.input_chains.resize(kept.inputs.size());
    for (std::size_t k = 0; k < kept.inputs.size(); ++k) {
      std::vector<LayerNode> chain;
      std::size_t p = graph.preds_[i][k];
      while (is_absorbable(graph.layers_[p].kind)) {
        chain.push_back(graph.layers_[p]);
        p = graph.preds_[p].front();
      }
      std::reverse(chain.begin(), chain.end());
      auto& existing = kept.input_chains[k];
      chain.insert(chain.end(), existing.begin(), existing.end());
      existing = std::move(chain);
      kept.inputs[k] = graph.layers_[p].id;
    }
    result.layers_.push_back(std::move(kept));
  }
  result.registered_.assign(registered.begin(), registered.end());
  result.index_layers();
  return result;
}

NetworkGraph expand_absorbed(const NetworkGraph& graph) {
  if (!graph.absorbed_) return graph;
  NetworkGraph result;
  std::set<std::string> emitted;
  for (const LayerNode& node : graph.layers_) {
    LayerNode plain = node;
    plain.input_chains.clear();
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      std::string upstream = node.inputs[k];
      if (k < node.input_chains.size()) {
        for (const LayerNode& op : node.input_chains[k]) {
          if (emitted.insert(op.id).second) result.layers_.push_back(op);
          upstream = op.id;
        }
      }
      plain.inputs[k] = upstream;
    }
    emitted.insert(plain.id);
    result.layers_.push_back(std::move(plain));
  }
  result.index_layers();
  return result;
}

std::vector<std::string> classifier_layers(const NetworkGraph& graph) {
  std::vector<std::string> found;
  std::vector<std::size_t> stack = {graph.loss_index()};
  std::set<std::size_t> seen;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    if (!seen.insert(i).second) continue;
    const LayerNode& l = graph.layer(i);
    if (is_weight_bearing(l.kind)) {
      found.push_back(l.id);
      continue;
    }
    for (std::size_t p : graph.predecessors(i)) stack.push_back(p);
  }
  std::sort(found.begin(), found.end(),
            [&](const std::string& a, const std::string& b) { return graph.index_of(a) < graph.index_of(b); });
  return found;
}

}  // namespace domino
