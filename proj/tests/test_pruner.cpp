#include <doctest.h>

#include <sstream>

#include "domino/pruner.hpp"
#include "support.hpp"

using namespace domino;
using support::code_of;

TEST_CASE("pruning one channel of a two-conv net") {
  Model m = linear_toy(1);
  support::randomize(m.params, 3);
  PruneState s(m.graph, m.params, never_prune_guard(m.graph));
  const PruneSet ps = prune_set(s.dependency(), out_ch("conv1", 0));
  s.apply_prune(ps);
  const Tensor& w1 = s.params().at("conv1.weight");
  const Tensor& w2 = s.params().at("conv2.weight");
  std::size_t zeros1 = 0, zeros2 = 0;
  for (float v : w1.values()) zeros1 += v == 0.0f;
  for (float v : w2.values()) zeros2 += v == 0.0f;
  CHECK(zeros1 == 27);
  CHECK(zeros2 == 36);
  for (std::size_t e = 0; e < 27; ++e) CHECK(w1[e] == 0.0f);
  CHECK(s.params().at("bias1.bias")[0] == 0.0f);
  CHECK(s.params().at("bias1.bias")[1] != 0.0f);
  CHECK(s.weights_removed() == doctest::Approx((27.0 + 36.0) / (108.0 + 144.0)));

  const auto r = forward(s.graph(), s.params(), support::random_images(m.graph, 3, 1), {});
  for (std::size_t n = 0; n < 3; ++n) {
    for (float v : r.activation("conv1").plane(n, 0)) CHECK(v == 0.0f);
  }
  CHECK(code_of([&] { s.apply_prune(ps); }) == ErrorCode::OverlapWithPruned);
}

TEST_CASE("argmin with deterministic tie-break") {
  SaliencyVector v;
  v[out_ch("b", 0)] = {0, 0, 0.9};
  v[out_ch("b", 1)] = {0, 0, 0.1};
  CHECK(*select_min(v) == out_ch("b", 1));
  v[out_ch("a", 3)] = {0, 0, 0.1};
  v[out_ch("a", 2)] = {0, 0, 0.1};
  CHECK(*select_min(v) == out_ch("a", 2));
  CHECK(!select_min({}));
}

TEST_CASE("classifier is guarded unless included") {
  const Model m = resblock_toy(1);
  CHECK(never_prune_guard(m.graph) == std::set<std::string>{"fc"});
  CHECK(never_prune_guard(m.graph, true).empty());
  PruneState s(m.graph, m.params, never_prune_guard(m.graph));
  for (const auto& c : s.candidates()) CHECK(c.layer != "fc");
}

TEST_CASE("a Domino-o step prunes a whole coparent class") {
  const Model m = resblock_toy(2);
  PruneState s(m.graph, m.params, never_prune_guard(m.graph));
  const PruneRecord r = prune_step(s, {Variant::DominoO, parse_metric("l1")}, {}, false, 1);
  CHECK(r.set_size == 2);
  CHECK(!r.accuracy);
  CHECK(s.pruned_mask().size() == 2);
}

TEST_CASE("campaigns") {
  const Model m = grouped_toy(4);
  const Dataset test = support::random_dataset(m.graph, 40, 4, 8);
  const DominoConfig cfg{Variant::DominoIO, parse_metric("l1-avg")};

  SUBCASE("stop_drop 100 runs to exhaustion") {
    PruneState final_state(m.graph, m.params, {});
    const PruneTrace t = run_campaign(m.graph, m.params, cfg, test, nullptr, {100.0, 1, false}, &final_state);
    CHECK(t.records.back().weights_removed_cum == 1.0);
    CHECK(final_state.candidates().empty());
    for (std::size_t i = 1; i < t.records.size(); ++i) {
      CHECK(t.records[i].weights_removed_cum >= t.records[i - 1].weights_removed_cum);
    }
    PruneState again = final_state;
    CHECK(code_of([&] { prune_step(again, cfg, {}, false, 99); }) == ErrorCode::NothingLeftToPrune);
  }
  SUBCASE("eval-every thins evaluation") {
    const PruneTrace t = run_campaign(m.graph, m.params, cfg, test, nullptr, {100.0, 3, false});
    for (const auto& r : t.records) {
      if (r.iteration % 3 != 0 && &r != &t.records.back()) CHECK(!r.accuracy);
      if (r.iteration % 3 == 0) CHECK(r.accuracy);
    }
    CHECK(t.records.back().accuracy);
  }
  SUBCASE("stops at the first record below the bound") {
    const PruneTrace t = run_campaign(m.graph, m.params, cfg, test, nullptr, {5.0, 1, false});
    for (std::size_t i = 0; i + 1 < t.records.size(); ++i) {
      CHECK(within_drop(*t.records[i].accuracy, t.initial_accuracy, 5.0));
    }
    CHECK(t.metadata.at("excluded_layers") == "fc");
  }
}

TEST_CASE("stop rule uses absolute points") {
  CHECK(within_drop(0.65, 0.70, 5.0));
  CHECK(!within_drop(0.6499, 0.70, 5.0));
}

TEST_CASE("trace CSV round trip") {
  PruneTrace t;
  t.initial_accuracy = 0.5;
  t.stop_drop = 5.0;
  t.metadata = {{"initial_accuracy", "0.500000"}, {"stop_drop", "5.000000"}, {"variant", "channel"}};
  t.records.push_back({1, out_ch("convA", 3), 2, 0.125, 0.5});
  t.records.push_back({2, out_ch("convC", 0), 2, 0.25, std::nullopt});
  std::ostringstream out;
  write_trace_csv(t, out);
  std::istringstream in(out.str());
  const PruneTrace back = read_trace_csv(in);
  CHECK(back.records == t.records);
  CHECK(back.metadata == t.metadata);
  std::istringstream bad("iteration,seed_layer\n");
  CHECK(code_of([&] { read_trace_csv(bad); }) == ErrorCode::ParseError);
}

TEST_CASE("saliency batch is seeded") {
  const SynthSplits d = synth_dataset(3, {.classes = 3, .train_size = 50, .test_size = 10});
  const Dataset a = make_saliency_batch(d.train, 20, 7), b = make_saliency_batch(d.train, 20, 7);
  CHECK(a.labels == b.labels);
  CHECK(a.images == b.images);
  CHECK(a.size() == 20);
  CHECK(make_saliency_batch(d.train, 500, 7).size() == 50);
}
