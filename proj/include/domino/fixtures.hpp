#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "domino/dataset.hpp"
#include "domino/engine.hpp"
#include "domino/graph.hpp"
#include "domino/tensor_store.hpp"

namespace domino {

struct Model {
  NetworkGraph graph;
  TensorStore params;
};

/// Incremental network construction with shape tracking and seeded
/// initialisation (He-normal weights, zero biases, identity BatchNorm).
class ModelBuilder {
public:
  explicit ModelBuilder(std::uint64_t seed) : rng_(seed) {}

  std::string input(const std::string& id, std::size_t channels, std::size_t height, std::size_t width);
  std::string conv(const std::string& id, const std::string& from, std::size_t out_channels, std::size_t kernel,
                   std::size_t stride = 1, std::size_t pad = 0, std::size_t groups = 1, bool bias = false,
                   GroupMapping mapping = GroupMapping::Interleaved);
  std::string fc(const std::string& id, const std::string& from, std::size_t out_channels, bool bias = true);
  std::string batchnorm(const std::string& id, const std::string& from);
  std::string bias(const std::string& id, const std::string& from);
  std::string relu(const std::string& id, const std::string& from);
  std::string add(const std::string& id, const std::vector<std::string>& from);
  std::string maxpool(const std::string& id, const std::string& from, std::size_t kernel, std::size_t stride);
  std::string avgpool(const std::string& id, const std::string& from, std::size_t kernel, std::size_t stride);
  std::string global_avgpool(const std::string& id, const std::string& from);
  std::string flatten(const std::string& id, const std::string& from);
  std::string loss(const std::string& id, const std::string& from);

  /// Randomises BatchNorm statistics and biases so that tests see non-trivial
  /// values everywhere.
  void randomize_all();

  Model build() const;

  std::size_t channels(const std::string& id) const;

private:
  struct Shape {
    std::size_t c, h, w;
  };
  LayerNode& push(LayerNode node, Shape shape);
  Tensor he_normal(std::vector<std::size_t> dims, std::size_t fan_in);

  std::mt19937_64 rng_;
  std::vector<LayerNode> layers_;
  std::map<std::string, Shape> shapes_;
  TensorStore params_;
};

/// Input -> conv1 -> bias -> relu -> conv2 -> relu -> gap -> fc -> loss.
Model linear_toy(std::uint64_t seed, std::size_t classes = 3);

/// Two residual blocks; the first joins convA (through BN/ReLU) with convB,
/// which reads convA; the second joins convC with convD. Nine layers once
/// activations are absorbed, two of them joins.
Model resblock_toy(std::uint64_t seed, std::size_t classes = 10);

/// Stem plus two identity-skip residual blocks sharing one spine, so the stem
/// and both block outputs are coupled at every channel index.
Model spine_toy(std::uint64_t seed, std::size_t classes = 10);

/// Conv stack with g=2 and g=4 grouped convolutions.
Model grouped_toy(std::uint64_t seed, std::size_t classes = 4);

/// Producer with 4 channels feeding a g=2 convolution with 2 slots per group.
Model group_pair_toy(std::uint64_t seed, GroupMapping mapping = GroupMapping::Interleaved);

/// Small net (under 1000 parameters) for gradient checks: conv with bias,
/// BatchNorm, g=2 conv, residual add, max or average pooling and an FC head.
/// Structure and values vary with `seed`; every parameter is randomised.
Model gradcheck_net(std::uint64_t seed);

struct RandomGraphOptions {
  std::size_t min_weight_layers = 3;
  std::size_t max_weight_layers = 8;
  bool random_params = true;
};

/// Random valid network with 3-8 weight-bearing layers containing at least
/// one join, split or grouped convolution (g in {2,4}).
Model random_graph(std::uint64_t seed, const RandomGraphOptions& opts = {});

/// Named fixtures: "linear-toy", "resblock-toy", "spine-toy", "grouped-toy",
/// "group-pair". Throws InvalidArgument.
Model make_fixture(const std::string& name, std::uint64_t seed);
std::vector<std::string> fixture_names();

/// Desk-scale training setup paired with each named fixture.
struct FixtureTraining {
  SynthSpec data;
  std::uint64_t data_seed = 2024;
  TrainConfig train;
};

FixtureTraining fixture_training(const std::string& name);

struct TrainedFixture {
  Model model;
  SynthSplits data;
  double test_accuracy = 0.0;
};

/// Builds the fixture with `seed`, trains it on its synthetic data and
/// reports test accuracy. Deterministic in (name, seed).
TrainedFixture train_fixture(const std::string& name, std::uint64_t seed);

}  // namespace domino
