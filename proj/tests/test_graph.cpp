#include <doctest.h>

#include "domino/graph.hpp"
#include "support.hpp"

using namespace domino;
using support::code_of;

namespace {

LayerNode node(std::string id, LayerKind kind, std::vector<std::string> inputs = {}) {
  LayerNode n;
  n.id = std::move(id);
  n.kind = kind;
  n.inputs = std::move(inputs);
  return n;
}

LayerNode input(std::size_t c, std::size_t hw) {
  LayerNode n = node("in", LayerKind::Input);
  n.out_channels = c;
  n.out_height = n.out_width = hw;
  return n;
}

LayerNode conv(std::string id, std::string from, std::size_t out, std::size_t k, TensorStore& store,
               std::size_t in_c, std::size_t groups = 1) {
  LayerNode n = node(id, LayerKind::Conv2D, {std::move(from)});
  n.out_channels = out;
  n.kernel = k;
  n.groups = groups;
  n.params.weight = id + ".w";
  store.put(n.params.weight, Tensor({out, in_c / groups, k, k}));
  return n;
}

}  // namespace

TEST_CASE("two-layer net resolves to Input, Conv, Loss") {
  TensorStore s;
  auto g = build_graph({node("loss", LayerKind::SoftmaxLoss, {"c"}), conv("c", "in", 4, 1, s, 3), input(3, 1)}, s);
  REQUIRE(g.size() == 3);
  CHECK(g.layer(0).id == "in");
  CHECK(g.layer(1).id == "c");
  CHECK(g.layer(2).id == "loss");
  CHECK(g.layer(1).out_channels == 4);
  CHECK(g.loss_index() == 2);
}

TEST_CASE("join of 4- and 8-channel producers is rejected") {
  TensorStore s;
  std::vector<LayerNode> layers = {input(3, 4), conv("a", "in", 4, 1, s, 3), conv("b", "in", 8, 1, s, 3),
                                   node("add", LayerKind::EltwiseAdd, {"a", "b"}),
                                   node("gap", LayerKind::GlobalAvgPool, {"add"}),
                                   node("loss", LayerKind::SoftmaxLoss, {"gap"})};
  CHECK(code_of([&] { build_graph(layers, s); }) == ErrorCode::JoinArityMismatch);
}

TEST_CASE("validation errors") {
  TensorStore s;
  auto base = [&] {
    return std::vector<LayerNode>{input(3, 1), conv("c", "in", 4, 1, s, 3), node("loss", LayerKind::SoftmaxLoss, {"c"})};
  };
  SUBCASE("cycle") {
    auto l = base();
    l[1].inputs = {"loss"};
    l.push_back(node("x", LayerKind::ReLU, {"in"}));
    CHECK(code_of([&] { build_graph(l, s); }) == ErrorCode::CycleDetected);
  }
  SUBCASE("missing tensor") {
    auto l = base();
    l[1].params.weight = "nope";
    CHECK(code_of([&] { build_graph(l, s); }) == ErrorCode::DanglingTensorRef);
  }
  SUBCASE("wrong weight shape") {
    auto l = base();
    s.put("c.w", Tensor({4, 2, 1, 1}));
    CHECK(code_of([&] { build_graph(l, s); }) == ErrorCode::ShapeMismatch);
  }
  SUBCASE("unknown kind") { CHECK(code_of([] { parse_layer_kind("Concat"); }) == ErrorCode::UnsupportedLayer); }
  SUBCASE("join with one input") {
    auto l = base();
    l.insert(l.begin() + 2, node("add", LayerKind::EltwiseAdd, {"c"}));
    l.back().inputs = {"add"};
    CHECK(code_of([&] { build_graph(l, s); }) == ErrorCode::JoinArityMismatch);
  }
  SUBCASE("two inputs") {
    auto l = base();
    auto extra = input(3, 1);
    extra.id = "in2";
    l.push_back(extra);
    CHECK(code_of([&] { build_graph(l, s); }) == ErrorCode::ParseError);
  }
  SUBCASE("groups must divide channels") {
    TensorStore t;
    auto l = std::vector<LayerNode>{input(3, 1), conv("c", "in", 4, 1, t, 4, 2), node("loss", LayerKind::SoftmaxLoss, {"c"})};
    CHECK(code_of([&] { build_graph(l, t); }) == ErrorCode::ShapeMismatch);
  }
}

TEST_CASE("resblock-toy absorbs to nine layers with two joins") {
  const Model m = resblock_toy(1);
  CHECK(m.graph.count(LayerKind::EltwiseAdd) == 2);
  const NetworkGraph a = absorb_activations(m.graph);
  CHECK(a.size() == 9);
  CHECK(a.count(LayerKind::EltwiseAdd) == 2);
  CHECK(a.count(LayerKind::ReLU) == 0);
  CHECK(a.count(LayerKind::BatchNorm) == 0);
  CHECK(absorb_activations(a) == a);
}

TEST_CASE("absorption registers BatchNorm parameters on the producing conv") {
  ModelBuilder b(3);
  auto x = b.input("in", 2, 4, 4);
  x = b.relu("r", b.batchnorm("bn", b.conv("c1", x, 3, 1)));
  x = b.conv("c2", x, 3, 1);
  b.loss("loss", b.fc("fc", b.global_avgpool("gap", x), 2));
  const Model m = b.build();
  const NetworkGraph a = absorb_activations(m.graph);
  std::set<std::string> tensors;
  for (const auto& r : a.registered_params()) {
    CHECK(r.anchor == "c1");
    tensors.insert(r.tensor);
  }
  CHECK(tensors == std::set<std::string>{"bn.mean", "bn.scale", "bn.shift", "bn.var"});
  CHECK(a.layer("c2").inputs == std::vector<std::string>{"c1"});

  ModelBuilder plain(3);
  auto y = plain.input("in", 2, 4, 4);
  y = plain.conv("c2", plain.relu("r", plain.conv("c1", y, 3, 1)), 3, 1);
  plain.loss("loss", plain.fc("fc", plain.global_avgpool("gap", y), 2));
  CHECK(absorb_activations(plain.build().graph).registered_params().empty());
}

TEST_CASE("expand_absorbed restores the original layers") {
  for (const auto& name : fixture_names()) {
    const Model m = make_fixture(name, 1);
    const NetworkGraph e = expand_absorbed(absorb_activations(m.graph));
    REQUIRE(e.size() == m.graph.size());
    for (const LayerNode& l : m.graph.layers()) CHECK(e.layer(l.id) == l);
  }
}

TEST_CASE("classifier is the FC feeding the loss") {
  CHECK(classifier_layers(resblock_toy(1).graph) == std::vector<std::string>{"fc"});
}

TEST_CASE("grouped channel mapping") {
  LayerNode l;
  l.kind = LayerKind::Conv2D;
  l.in_channels = 4;
  l.out_channels = 4;
  l.groups = 2;
  CHECK(l.slot_of_channel(0) == 0);
  CHECK(l.slot_of_channel(2) == 0);
  CHECK(l.slot_of_channel(3) == 1);
  CHECK(l.group_of_output(1) == 0);
  CHECK(l.group_of_output(2) == 1);
  l.mapping = GroupMapping::Blocked;
  CHECK(l.slot_of_channel(1) == 0);
  CHECK(l.slot_of_channel(2) == 1);
}

TEST_CASE("random graphs are valid and structured") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Model m = random_graph(seed);
    const std::size_t w = m.graph.count(LayerKind::Conv2D) + m.graph.count(LayerKind::FullyConnected);
    CHECK(w >= 3);
    CHECK(w <= 8);
  }
}
