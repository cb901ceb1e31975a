#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "domino/tensor_store.hpp"

namespace domino {

enum class LayerKind {
  Input,
  Conv2D,
  FullyConnected,
  EltwiseAdd,
  ReLU,
  BatchNorm,
  Bias,
  MaxPool,
  AvgPool,
  GlobalAvgPool,
  Flatten,
  SoftmaxLoss,
};

std::string_view to_string(LayerKind kind);
/// Throws UnsupportedLayer for names outside the closed set (e.g. "Concat").
LayerKind parse_layer_kind(std::string_view name);

/// How a grouped convolution assigns producer channel j to (group, slot).
///   Interleaved: slot = j mod m_in, group = j div m_in  (slot indices 0,1,0,1,..)
///   Blocked:     slot = j div g,    group = j mod g     (slot indices 0,0,1,1,..)
enum class GroupMapping { Interleaved, Blocked };

std::string_view to_string(GroupMapping mapping);
GroupMapping parse_group_mapping(std::string_view name);

bool is_weight_bearing(LayerKind kind);
/// Zero-preserving single-input ops that are folded into edges by absorption.
bool is_absorbable(LayerKind kind);

struct ParamRefs {
  std::string weight;
  std::string bias;
  // BatchNorm
  std::string scale;
  std::string shift;
  std::string mean;
  std::string var;

  bool operator==(const ParamRefs&) const = default;
};

struct LayerNode {
  std::string id;
  LayerKind kind = LayerKind::Input;
  std::vector<std::string> inputs;

  std::size_t in_channels = 0;   // total channels entering the layer
  std::size_t out_channels = 0;
  std::size_t kernel = 1;        // Conv2D, MaxPool, AvgPool
  std::size_t stride = 1;
  std::size_t pad = 0;           // Conv2D only
  std::size_t groups = 1;        // Conv2D only
  GroupMapping mapping = GroupMapping::Interleaved;

  // Resolved spatial extents.
  std::size_t in_height = 0, in_width = 0;
  std::size_t out_height = 0, out_width = 0;

  ParamRefs params;

  /// Absorbed graphs only: for each entry of `inputs`, the zero-preserving ops
  /// (in data-flow order) that sat between the producer and this layer.
  std::vector<std::vector<LayerNode>> input_chains;

  /// Input slots per filter: m_in for Conv2D (in_channels / groups), the
  /// source channel count for FullyConnected.
  std::size_t slots() const;
  std::size_t group_of_output(std::size_t out_channel) const;
  std::size_t slot_of_channel(std::size_t in_channel) const;
  std::size_t channel_of(std::size_t group, std::size_t slot) const;
  /// Weight tensor shape: m_out x m_in x kh x kw. FullyConnected consumes the
  /// whole input map, so its kernel extent is the input's spatial extent.
  std::vector<std::size_t> weight_dims() const;
  /// Per-channel tensors owned by this node (bias, BN scale/shift/mean/var).
  std::vector<std::string> channel_param_refs() const;

  bool operator==(const LayerNode&) const = default;
};

/// Per-channel parameter of an absorbed activation, attached to the nearest
/// surviving upstream layer. Index i of `tensor` belongs to channel i of `anchor`.
struct RegisteredParam {
  std::string anchor;
  std::string tensor;

  auto operator<=>(const RegisteredParam&) const = default;
};

/// Validated layer DAG. Layers are stored in a topological order that is
/// stable with respect to declaration order. Immutable after construction.
class NetworkGraph {
public:
  NetworkGraph() = default;

  const std::vector<LayerNode>& layers() const noexcept { return layers_; }
  std::size_t size() const noexcept { return layers_.size(); }
  const LayerNode& layer(std::size_t i) const { return layers_.at(i); }
  const LayerNode& layer(const std::string& id) const;
  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;

  const std::vector<std::size_t>& predecessors(std::size_t i) const { return preds_.at(i); }
  const std::vector<std::size_t>& consumers(std::size_t i) const { return consumers_.at(i); }

  std::size_t input_index() const noexcept { return input_; }
  std::size_t loss_index() const noexcept { return loss_; }

  bool absorbed() const noexcept { return absorbed_; }
  const std::vector<RegisteredParam>& registered_params() const noexcept { return registered_; }

  std::size_t count(LayerKind kind) const;

  bool operator==(const NetworkGraph& o) const {
    return layers_ == o.layers_ && registered_ == o.registered_ && absorbed_ == o.absorbed_;
  }

private:
  friend NetworkGraph build_graph(std::vector<LayerNode>, const TensorStore&);
  friend NetworkGraph absorb_activations(const NetworkGraph&);
  friend NetworkGraph expand_absorbed(const NetworkGraph&);

  void index_layers();

  std::vector<LayerNode> layers_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::vector<std::size_t>> preds_;
  std::vector<std::vector<std::size_t>> consumers_;
  std::size_t input_ = 0;
  std::size_t loss_ = 0;
  bool absorbed_ = false;
  std::vector<RegisteredParam> registered_;
};

/// Validates declared layers against the parameter store and resolves all
/// shapes. Declaration order need not be topological. Errors: ParseError,
/// CycleDetected, ShapeMismatch, DanglingTensorRef, JoinArityMismatch,
/// UnsupportedLayer.
NetworkGraph build_graph(std::vector<LayerNode> layers, const TensorStore& store);

/// Folds ReLU/BatchNorm/Bias/pooling into the edges between surviving layers
/// and registers per-channel activation parameters against the layer whose
/// output channels they follow. Idempotent.
NetworkGraph absorb_activations(const NetworkGraph& graph);

/// Re-materialises absorbed ops as ordinary layers; the inverse of absorption
/// up to layer order.
NetworkGraph expand_absorbed(const NetworkGraph& graph);

/// Output layers whose channels reach the loss directly (the classifier).
std::vector<std::string> classifier_layers(const NetworkGraph& graph);

}  // namespace domino
