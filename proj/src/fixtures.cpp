#include "domino/fixtures.hpp"

#include <cmath>

#include "domino/error.hpp"

namespace domino {

LayerNode& ModelBuilder::push(LayerNode node, Shape shape) {
  shapes_[node.id] = shape;
  layers_.push_back(std::move(node));
  return layers_.back();
}

Tensor ModelBuilder::he_normal(std::vector<std::size_t> dims, std::size_t fan_in) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t(std::move(dims));
  for (auto& v : t.values()) v = static_cast<float>(dist(rng_));
  return t;
}

std::size_t ModelBuilder::channels(const std::string& id) const { return shapes_.at(id).c; }

std::string ModelBuilder::input(const std::string& id, std::size_t channels, std::size_t height, std::size_t width) {
  LayerNode n;
  n.id = id;
  n.kind = LayerKind::Input;
  n.out_channels = channels;
  n.out_height = height;
  n.out_width = width;
  push(std::move(n), {channels, height, width});
  return id;
}

std::string ModelBuilder::conv(const std::string& id, const std::string& from, std::size_t out_channels,
                               std::size_t kernel, std::size_t stride, std::size_t pad, std::size_t groups,
                               bool with_bias, GroupMapping mapping) {
  const Shape in = shapes_.at(from);
  LayerNode n;
  n.id = id;
  n.kind = LayerKind::Conv2D;
  n.inputs = {from};
  n.out_channels = out_channels;
  n.kernel = kernel;
  n.stride = stride;
  n.pad = pad;
  n.groups = groups;
  n.mapping = mapping;
  n.params.weight = id + ".weight";
  const std::size_t slots = in.c / groups;
  params_.put(n.params.weight, he_normal({out_channels, slots, kernel, kernel}, slots * kernel * kernel));
  if (with_bias) {
    n.params.bias = id + ".bias";
    params_.put(n.params.bias, Tensor({out_channels}));
  }
  const Shape out{out_channels, (in.h + 2 * pad - kernel) / stride + 1, (in.w + 2 * pad - kernel) / stride + 1};
  push(std::move(n), out);
  return id;
}

std::string ModelBuilder::fc(const std::string& id, const std::string& from, std::size_t out_channels,
                             bool with_bias) {
  const Shape in = shapes_.at(from);
  LayerNode n;
  n.id = id;
  n.kind = LayerKind::FullyConnected;
  n.inputs = {from};
  n.out_channels = out_channels;
  n.params.weight = id + ".weight";
  params_.put(n.params.weight, he_normal({out_channels, in.c, in.h, in.w}, in.c * in.h * in.w));
  if (with_bias) {
    n.params.bias = id + ".bias";
    params_.put(n.params.bias, Tensor({out_channels}));
  }
  push(std::move(n), {out_channels, 1, 1});
  return id;
}

std::string ModelBuilder::batchnorm(const std::string& id, const std::string& from) {
  const Shape in = shapes_.at(from);
  LayerNode n;
  n.id = id;
  n.kind = LayerKind::BatchNorm;
  n.inputs = {from};
  n.params.scale = id + ".scale";
  n.params.shift = id + ".shift";
  n.params.mean = id + ".mean";
  n.params.var = id + ".var";
  params_.put(n.params.scale, Tensor({in.c}, 1.0f));
  params_.put(n.params.shift, Tensor({in.c}, 0.0f));
  params_.put(n.params.mean, Tensor({in.c}, 0.0f));
  params_.put(n.params.var, Tensor({in.c}, 1.0f));
  push(std::move(n), in);
  return id;
}

std::string ModelBuilder::bias(const std::string& id, const std::string& from) {
  const Shape in = shapes_.at(from);
  LayerNode n;
  n.id = id;
  n.kind = LayerKind::Bias;
  n.inputs = {from};
  n.params.bias = id + ".bias";
  params_.put(n.params.bias, Tensor({in.c}, 0.0f));
  push(std::move(n), in);
  return id;
}

namespace {

LayerNode simple(const std::string& id, LayerKind kind, std::vector<std::string> inputs) {
  LayerNode n;
  n.id = id;
  n.kind = kind;
  n.inputs = std::move(inputs);
  return n;
}

}  // namespace

std::string ModelBuilder::relu(const std::string& id, const std::string& from) {
  push(simple(id, LayerKind::ReLU, {from}), shapes_.at(from));
  return id;
}

std::string ModelBuilder::add(const std::string& id, const std::vector<std::string>& from) {
  push(simple(id, LayerKind::EltwiseAdd, from), shapes_.at(from.front()));
  return id;
}

std::string ModelBuilder::maxpool(const std::string& id, const std::string& from, std::size_t kernel,
                                  std::size_t stride) {
  const Shape in = shapes_.at(from);
  LayerNode n = simple(id, LayerKind::MaxPool, {from});
  n.kernel = kernel;
  n.stride = stride;
  push(std::move(n), {in.c, (in.h - kernel) / stride + 1, (in.w - kernel) / stride + 1});
  return id;
}

std::string ModelBuilder::avgpool(const std::string& id, const std::string& from, std::size_t kernel,
                                  std::size_t stride) {
  const Shape in = shapes_.at(from);
  LayerNode n = simple(id, LayerKind::AvgPool, {from});
  n.kernel = kernel;
  n.stride = stride;
  push(std::move(n), {in.c, (in.h - kernel) / stride + 1, (in.w - kernel) / stride + 1});
  return id;
}

std::string ModelBuilder::global_avgpool(const std::string& id, const std::string& from) {
  push(simple(id, LayerKind::GlobalAvgPool, {from}), {shapes_.at(from).c, 1, 1});
  return id;
}

std::string ModelBuilder::flatten(const std::string& id, const std::string& from) {
  push(simple(id, LayerKind::Flatten, {from}), shapes_.at(from));
  return id;
}

std::string ModelBuilder::loss(const std::string& id, const std::string& from) {
  push(simple(id, LayerKind::SoftmaxLoss, {from}), shapes_.at(from));
  return id;
}

void ModelBuilder::randomize_all() {
  std::uniform_real_distribution<double> centred(-0.5, 0.5);
  std::uniform_real_distribution<double> positive(0.5, 1.5);
  for (const LayerNode& l : layers_) {
    for (const std::string* ref : {&l.params.bias, &l.params.shift, &l.params.mean}) {
      if (ref->empty()) continue;
      for (auto& v : params_.at(*ref).values()) v = static_cast<float>(centred(rng_));
    }
    for (const std::string* ref : {&l.params.scale, &l.params.var}) {
      if (ref->empty()) continue;
      for (auto& v : params_.at(*ref).values()) v = static_cast<float>(positive(rng_));
    }
  }
}

Model ModelBuilder::build() const { return {build_graph(layers_, params_), params_}; }

Model linear_toy(std::uint64_t seed, std::size_t classes) {
  ModelBuilder b(seed);
  auto x = b.input("input", 3, 8, 8);
  x = b.conv("conv1", x, 4, 3, 1, 1);
  x = b.bias("bias1", x);
  x = b.relu("relu1", x);
  x = b.conv("conv2", x, 4, 3, 1, 1);
  x = b.relu("relu2", x);
  x = b.global_avgpool("gap", x);
  x = b.fc("fc", x, classes);
  b.loss("loss", x);
  return b.build();
}

Model resblock_toy(std::uint64_t seed, std::size_t classes) {
  ModelBuilder b(seed);
  auto x = b.input("input", 3, 8, 8);
  auto a = b.relu("reluA", b.batchnorm("bnA", b.conv("convA", x, 16, 3, 1, 1)));
  auto bb = b.batchnorm("bnB", b.conv("convB", a, 16, 3, 1, 1));
  auto j1 = b.relu("relu1", b.add("add1", {a, bb}));
  auto c = b.relu("reluC", b.batchnorm("bnC", b.conv("convC", j1, 32, 3, 2, 1)));
  auto d = b.batchnorm("bnD", b.conv("convD", c, 32, 3, 1, 1));
  auto j2 = b.relu("relu2", b.add("add2", {c, d}));
  auto head = b.fc("fc", b.global_avgpool("gap", j2), classes);
  b.loss("loss", head);
  return b.build();
}

Model spine_toy(std::uint64_t seed, std::size_t classes) {
  ModelBuilder b(seed);
  auto x = b.input("input", 3, 8, 8);
  auto s = b.relu("reluS", b.conv("stem", x, 8, 3, 1, 1));
  auto b1 = b.conv("block1b", b.relu("relu1a", b.conv("block1a", s, 8, 3, 1, 1)), 8, 3, 1, 1);
  auto j1 = b.relu("relu1", b.add("add1", {s, b1}));
  auto b2 = b.conv("block2b", b.relu("relu2a", b.conv("block2a", j1, 8, 3, 1, 1)), 8, 3, 1, 1);
  auto j2 = b.relu("relu2", b.add("add2", {j1, b2}));
  b.loss("loss", b.fc("fc", b.global_avgpool("gap", j2), classes));
  return b.build();
}

Model grouped_toy(std::uint64_t seed, std::size_t classes) {
  ModelBuilder b(seed);
  auto x = b.input("input", 3, 8, 8);
  x = b.relu("relu1", b.conv("conv1", x, 16, 3, 1, 1, 1, true));
  x = b.relu("relu2", b.conv("conv2", x, 16, 3, 1, 1, 2, true));
  x = b.maxpool("pool", x, 2, 2);
  x = b.relu("relu3", b.conv("conv3", x, 32, 3, 1, 1, 4, true));
  b.loss("loss", b.fc("fc", b.global_avgpool("gap", x), classes));
  return b.build();
}

Model group_pair_toy(std::uint64_t seed, GroupMapping mapping) {
  ModelBuilder b(seed);
  auto x = b.input("input", 3, 4, 4);
  x = b.relu("relu1", b.conv("prev", x, 4, 3, 1, 1));
  x = b.relu("relu2", b.conv("grouped", x, 4, 3, 1, 1, 2, false, mapping));
  b.loss("loss", b.fc("fc", b.global_avgpool("gap", x), 3));
  return b.build();
}

Model gradcheck_net(std::uint64_t seed) {
  ModelBuilder b(seed);
  const bool wide_input = seed % 2 == 0;
  const auto mapping = (seed / 2) % 2 ? GroupMapping::Blocked : GroupMapping::Interleaved;
  auto x = b.input("input", wide_input ? 4 : 2, 6, 6);
  auto r1 = b.relu("relu1", b.batchnorm("bn1", b.conv("conv1", x, 4, 3, 1, 1, 1, true)));
  std::string c2 = b.conv("conv2", r1, 4, 3, 1, 1, 2, false, mapping);
  if (seed % 3 == 0) c2 = b.batchnorm("bn2", c2);
  auto j = b.relu("relu2", b.add("add", {r1, c2}));
  j = seed % 2 ? b.maxpool("pool", j, 2, 2) : b.avgpool("pool", j, 2, 2);
  j = (seed / 3) % 2 ? b.flatten("flat", j) : b.global_avgpool("gap", j);
  b.loss("loss", b.fc("fc", j, 3));
  b.randomize_all();
  return b.build();
}

Model random_graph(std::uint64_t seed, const RandomGraphOptions& opts) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + attempt);
    auto coin = [&](double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; };
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

    ModelBuilder b(rng());
    std::vector<std::string> avail = {b.input("input", coin(0.5) ? 2 : 4, 4, 4)};
    const std::size_t weight_layers =
        opts.min_weight_layers + pick(opts.max_weight_layers - opts.min_weight_layers + 1);
    const bool hidden_fc = weight_layers >= 4 && coin(0.25);
    const std::size_t convs = weight_layers - 1 - (hidden_fc ? 1 : 0);
    bool grouped = false;
    std::size_t joins = 0;

    for (std::size_t i = 0; i < convs; ++i) {
      const std::string src = coin(0.6) ? avail.back() : avail[pick(avail.size())];
      const std::size_t in_c = b.channels(src);
      std::vector<std::size_t> group_options = {1};
      for (std::size_t g : {2, 4}) {
        if (in_c % g == 0) group_options.push_back(g);
      }
      const std::size_t groups = coin(0.4) ? group_options[pick(group_options.size())] : 1;
      grouped |= groups > 1;
      const std::size_t out_c = coin(0.5) ? 4 : 8;
      const std::size_t kernel = coin(0.5) ? 1 : 3;
      const auto mapping = coin(0.7) ? GroupMapping::Interleaved : GroupMapping::Blocked;
      const std::string id = "c" + std::to_string(i);
      std::string x = b.conv(id, src, out_c, kernel, 1, kernel / 2, groups, coin(0.5), mapping);
      if (coin(0.4)) x = b.batchnorm(id + "_bn", x);
      if (coin(0.2)) x = b.bias(id + "_b", x);
      if (coin(0.7)) x = b.relu(id + "_relu", x);
      if (coin(0.15)) x = coin(0.5) ? b.maxpool(id + "_mp", x, 1, 1) : b.avgpool(id + "_ap", x, 1, 1);
      avail.push_back(x);

      if (coin(0.4)) {
        std::vector<std::string> same;
        for (const auto& t : avail) {
          if (t != x && b.channels(t) == b.channels(x)) same.push_back(t);
        }
        if (!same.empty()) {
          std::vector<std::string> parts = {same[pick(same.size())], x};
          if (same.size() > 1 && coin(0.3)) {
            const auto& third = same[pick(same.size())];
            if (third != parts[0]) parts.push_back(third);
          }
          std::string j = b.add("j" + std::to_string(joins++), parts);
          if (coin(0.5)) j = b.relu(j + "_relu", j);
          avail.push_back(j);
        }
      }
    }

    std::string x = avail.back();
    x = coin(0.5) ? b.global_avgpool("gap", x) : b.flatten("flat", x);
    if (hidden_fc) x = b.relu("hidden_relu", b.fc("hidden", x, 6, coin(0.5)));
    b.loss("loss", b.fc("out", x, 3, coin(0.5)));
    if (opts.random_params) b.randomize_all();
    Model m = b.build();

    bool split = false;
    for (std::size_t i = 0; i < m.graph.size(); ++i) split |= m.graph.consumers(i).size() > 1;
    if (joins > 0 || split || grouped) return m;
  }
}

std::vector<std::string> fixture_names() {
  return {"linear-toy", "resblock-toy", "spine-toy", "grouped-toy", "group-pair"};
}

Model make_fixture(const std::string& name, std::uint64_t seed) {
  if (name == "linear-toy") return linear_toy(seed);
  if (name == "resblock-toy") return resblock_toy(seed);
  if (name == "spine-toy") return spine_toy(seed);
  if (name == "grouped-toy") return grouped_toy(seed);
  if (name == "group-pair") return group_pair_toy(seed);
  throw Error(ErrorCode::InvalidArgument, "unknown fixture '" + name + "'");
}

FixtureTraining fixture_training(const std::string& name) {
  FixtureTraining t;
  if (name == "grouped-toy") {
    t.data.classes = 4;
    t.data.noise = 0.2;
    t.train.epochs = 8;
  } else if (name == "linear-toy" || name == "group-pair") {
    t.data.classes = 3;
    if (name == "group-pair") t.data.height = t.data.width = 4;
    t.train.epochs = 5;
  } else {
    t.data.classes = 10;
    t.train.epochs = 12;
  }
  return t;
}

TrainedFixture train_fixture(const std::string& name, std::uint64_t seed) {
  const FixtureTraining setup = fixture_training(name);
  TrainedFixture out;
  out.model = make_fixture(name, seed);
  out.data = synth_dataset(setup.data_seed, setup.data);
  TrainConfig cfg = setup.train;
  cfg.seed = seed;
  train_sgd(out.model.graph, out.model.params, out.data.train, cfg);
  out.test_accuracy = evaluate_accuracy(out.model.graph, out.model.params, out.data.test);
  return out;
}

}  // namespace domino
