#include "domino/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "domino/dependency.hpp"
#include "domino/engine.hpp"
#include "domino/pruner.hpp"

namespace domino {

namespace {

std::vector<ChannelRef> weight_outputs(const NetworkGraph& g) {
  std::vector<ChannelRef> out;
  for (const LayerNode& l : g.layers()) {
    if (!is_weight_bearing(l.kind)) continue;
    for (std::size_t i = 0; i < l.out_channels; ++i) out.push_back(out_ch(l.id, i));
  }
  return out;
}

NetworkGraph with_flipped_mapping(const Model& m) {
  std::vector<LayerNode> layers = expand_absorbed(m.graph).layers();
  for (auto& l : layers) {
    if (l.kind == LayerKind::Conv2D && l.groups > 1) {
      l.mapping = l.mapping == GroupMapping::Interleaved ? GroupMapping::Blocked : GroupMapping::Interleaved;
    }
  }
  return build_graph(std::move(layers), m.params);
}

std::size_t oracle_mismatches(const Model& m, bool flip, std::string& first) {
  const DependencyGraph dep = build_dependency(flip ? with_flipped_mapping(m) : m.graph);
  std::size_t bad = 0;
  for (const auto& ref : weight_outputs(m.graph)) {
    if (!prune_set(dep, ref).same_content(oracle_prune_set(m.graph, ref))) {
      if (bad++ == 0) first = to_string(ref);
    }
  }
  return bad;
}

Tensor random_batch(const NetworkGraph& g, std::size_t n, std::mt19937_64& rng) {
  const LayerNode& in = g.layer(g.input_index());
  Tensor x({n, in.out_channels, in.out_height, in.out_width});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : x.values()) v = static_cast<float>(u(rng));
  return x;
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.dims() == b.dims() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// ReLU signs and max-pool winners; a finite difference is only meaningful
// when both perturbed points share this pattern with the base point.
std::vector<std::size_t> decision_pattern(const BasicBatchResult<double>& r) {
  std::vector<std::size_t> pattern;
  const NetworkGraph& g = r.graph;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const LayerNode& l = g.layer(i);
    if (l.kind != LayerKind::ReLU && l.kind != LayerKind::MaxPool) continue;
    const auto& in = r.activations[g.predecessors(i).front()];
    if (l.kind == LayerKind::ReLU) {
      for (double v : in.values()) pattern.push_back(v > 0.0);
      continue;
    }
    const std::size_t N = in.dim(0), C = in.dim(1), W = in.dim(3);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) {
        auto plane = in.plane(n, c);
        for (std::size_t oy = 0; oy < l.out_height; ++oy) {
          for (std::size_t ox = 0; ox < l.out_width; ++ox) {
            std::size_t best = 0;
            double best_v = -INFINITY;
            for (std::size_t ky = 0; ky < l.kernel; ++ky) {
              for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                const std::size_t e = (oy * l.stride + ky) * W + ox * l.stride + kx;
                if (plane[e] > best_v) {
                  best_v = plane[e];
                  best = e;
                }
              }
            }
            pattern.push_back(best);
          }
        }
      }
    }
  }
  return pattern;
}

}  // namespace

CheckResult check_oracle(const Model& model, bool flip_group_mapping) {
  CheckResult r{"oracle", false, ""};
  std::string first;
  const std::size_t bad = oracle_mismatches(model, flip_group_mapping, first);
  const std::size_t total = weight_outputs(model.graph).size();
  r.passed = bad == 0;
  r.detail = std::to_string(total - bad) + "/" + std::to_string(total) + " seeds agree";
  if (bad) r.detail += ", first mismatch at " + first;
  return r;
}

CheckResult check_oracle_random(std::size_t graphs, std::uint64_t seed, bool flip_group_mapping) {
  CheckResult r{"oracle", false, ""};
  std::size_t seeds = 0, bad = 0, bad_graphs = 0;
  std::string first;
  for (std::size_t i = 0; i < graphs; ++i) {
    const Model m = random_graph(seed + i);
    std::string where;
    const std::size_t b = oracle_mismatches(m, flip_group_mapping, where);
    seeds += weight_outputs(m.graph).size();
    bad += b;
    if (b && bad_graphs++ == 0) first = "graph " + std::to_string(seed + i) + " " + where;
  }
  r.passed = bad == 0;
  r.detail = std::to_string(graphs) + " graphs, " + std::to_string(seeds - bad) + "/" + std::to_string(seeds) +
             " seeds agree";
  if (bad) r.detail += ", first mismatch in " + first;
  return r;
}

CheckResult check_gradients(std::size_t nets, std::uint64_t seed) {
  constexpr double h = 1e-3, tolerance = 1e-3, floor = 1e-6;
  CheckResult r{"gradients", true, ""};
  std::size_t compared = 0, skipped = 0, failed = 0;
  double worst = 0.0;
  for (std::size_t k = 0; k < nets; ++k) {
    const Model m = gradcheck_net(seed + k);
    std::mt19937_64 rng(seed + k);
    const BasicTensor<double> x = tensor_cast<double>(random_batch(m.graph, 4, rng));
    std::vector<int> labels(4);
    for (auto& l : labels) l = static_cast<int>(rng() % 3);

    BasicParams<double> p = to_double(m.params);
    const auto base = backward<double>(m.graph, p, x, labels);
    const auto pattern = decision_pattern(base);
    for (auto& [name, t] : p) {
      const auto& g = base.grads_w.at(name);
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double keep = t[i];
        t[i] = keep + h;
        const auto plus = forward<double>(m.graph, p, x, labels);
        t[i] = keep - h;
        const auto minus = forward<double>(m.graph, p, x, labels);
        t[i] = keep;
        if (decision_pattern(plus) != pattern || decision_pattern(minus) != pattern) {
          ++skipped;
          continue;
        }
        const double fd = (plus.loss - minus.loss) / (2 * h);
        const double rel = std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), floor});
        worst = std::max(worst, rel);
        ++compared;
        failed += rel > tolerance;
      }
    }
  }
  r.passed = failed == 0 && compared > 0;
  r.detail = std::to_string(compared) + " parameters compared, " + std::to_string(failed) + " over tolerance, " +
             std::to_string(skipped) + " skipped at kinks, worst rel " + std::to_string(worst);
  return r;
}

CheckResult check_dead_parameters(const Model& model, std::uint64_t seed) {
  CheckResult r{"dead-parameters", true, ""};
  std::mt19937_64 rng(seed);
  const Tensor x = random_batch(model.graph, 8, rng);
  const PruneState fresh(model.graph, model.params, never_prune_guard(model.graph));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::size_t channels = 0, failures = 0;
  std::string first;

  auto randomised = [&](const PruneState& s, const PruneSet& pset, int axis) {
    TensorStore p = s.params();
    for (const auto& slice : pset.weight_slices) {
      if (slice.axis != axis) continue;
      Tensor& w = p.at(s.graph().layer(slice.layer).params.weight);
      const std::size_t m_out = w.dim(0), m_in = w.dim(1), k2 = w.dim(2) * w.dim(3);
      for (std::size_t o = 0; o < m_out; ++o) {
        for (std::size_t j = 0; j < m_in; ++j) {
          if ((axis == 0 ? o : j) != slice.index) continue;
          for (std::size_t e = 0; e < k2; ++e) w[(o * m_in + j) * k2 + e] = static_cast<float>(u(rng));
        }
      }
    }
    return p;
  };

  for (const auto& c : fresh.candidates()) {
    ++channels;
    PruneState s = fresh;
    const PruneSet pset = prune_set(s.dependency(), c);
    s.apply_prune(pset);
    const auto res = forward(s.graph(), s.params(), x, {});
    bool ok = true;
    for (const auto& cp : pset.coparents) {
      const Tensor& a = res.activation(cp.layer);
      for (std::size_t n = 0; n < a.dim(0) && ok; ++n) {
        for (float v : a.plane(n, cp.index)) ok &= v == 0.0f;
      }
    }
    const Tensor base = res.activations[res.graph.loss_index()];
    ok = ok && bit_identical(base, logits(s.graph(), randomised(s, pset, 1), x)) &&
         bit_identical(base, logits(s.graph(), randomised(s, pset, 0), x));
    if (!ok && failures++ == 0) first = to_string(c);
  }
  r.passed = failures == 0;
  r.detail = std::to_string(channels - failures) + "/" + std::to_string(channels) + " channels dead after pruning";
  if (failures) r.detail += ", first failure at " + first;
  return r;
}

}  // namespace domino
