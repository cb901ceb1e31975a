#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "domino/dataset.hpp"
#include "domino/graph.hpp"
#include "domino/tensor_store.hpp"

namespace domino {

template <typename T>
using BasicParams = std::map<std::string, BasicTensor<T>>;

inline constexpr double kBatchNormEpsilon = 1e-5;

/// Everything one pass over a batch produces. Vectors are indexed by layer
/// position in `graph` (the un-absorbed graph the engine executed).
template <typename T>
struct BasicBatchResult {
  NetworkGraph graph;
  double loss = 0.0;          // mean cross-entropy
  std::size_t correct = 0;    // top-1 hits
  std::size_t batch = 0;
  std::vector<BasicTensor<T>> activations;
  bool has_grads = false;
  std::vector<BasicTensor<T>> grads_a;   // dL/d(output of layer), summed over consumers
  std::vector<BasicTensor<T>> grads_in;  // dL/d(input) through this layer; weight-bearing layers only
  BasicParams<T> grads_w;                // keyed by parameter tensor name

  const BasicTensor<T>& activation(const std::string& id) const { return activations.at(graph.index_of(id)); }
  const BasicTensor<T>& grad_a(const std::string& id) const { return grads_a.at(graph.index_of(id)); }
};

using BatchResult = BasicBatchResult<float>;

/// Forward pass: activations for every layer, loss and top-1 count.
/// Absorbed graphs are expanded first. Throws ShapeMismatch.
template <typename T>
BasicBatchResult<T> forward(const NetworkGraph& net, const BasicParams<T>& params, const BasicTensor<T>& batch,
                            std::span<const int> labels);

/// Forward plus exact reverse-mode gradients for every parameter tensor and
/// every activation.
template <typename T>
BasicBatchResult<T> backward(const NetworkGraph& net, const BasicParams<T>& params, const BasicTensor<T>& batch,
                             std::span<const int> labels);

BatchResult forward(const NetworkGraph& net, const TensorStore& params, const Tensor& batch,
                    std::span<const int> labels);
BatchResult backward(const NetworkGraph& net, const TensorStore& params, const Tensor& batch,
                     std::span<const int> labels);

/// Logits only (input of the loss layer).
Tensor logits(const NetworkGraph& net, const TensorStore& params, const Tensor& batch);

/// Top-1 accuracy over the whole split, evaluated in fixed-size batches.
/// Throws EmptyDataset.
double evaluate_accuracy(const NetworkGraph& net, const TensorStore& params, const Dataset& data,
                         std::size_t batch_size = 250);

BasicParams<double> to_double(const TensorStore& store);
BasicParams<float> to_float(const TensorStore& store);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 1;
};

/// Plain SGD with momentum over a shuffled training split. BatchNorm running
/// statistics are frozen; only weights, biases and BN scale/shift move.
/// Returns the mean loss of the final epoch.
double train_sgd(const NetworkGraph& net, TensorStore& params, const Dataset& train, const TrainConfig& cfg);

}  // namespace domino
