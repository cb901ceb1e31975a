#include <doctest.h>

#include <sstream>

#include "domino/report.hpp"
#include "support.hpp"

using namespace domino;
using support::code_of;

namespace {

PruneTrace trace(std::vector<std::pair<double, double>> rows, double initial = 0.70, double drop = 5.0) {
  PruneTrace t;
  t.initial_accuracy = initial;
  t.stop_drop = drop;
  std::size_t i = 0;
  for (auto [removed, acc] : rows) t.records.push_back({++i, out_ch("c", i), 1, removed, acc});
  return t;
}

PruneTrace run(const std::string& variant, const std::string& metric, const std::string& seed, double removed) {
  PruneTrace t = trace({{removed, 0.70}, {removed + 0.1, 0.10}});
  t.metadata = {{"variant", variant}, {"metric", metric}, {"seed", seed}};
  return t;
}

}  // namespace

TEST_CASE("headline") {
  CHECK(headline(trace({{0.1, 0.69}, {0.2, 0.66}, {0.3, 0.64}})) == 0.2);
  CHECK(headline(trace({{0.1, 0.60}})) == 0.0);
  CHECK(headline(trace({{0.1, 0.69}, {0.2, 0.64}, {0.3, 0.66}, {0.4, 0.50}})) == 0.3);
  CHECK(headline(trace({{0.1, 0.69}, {0.2, 0.66}}), 0.70, 1.0) == 0.1);
  auto t = trace({{0.1, 0.69}, {0.2, 0.66}});
  const double before = headline(t);
  t.records.push_back({3, out_ch("c", 9), 1, 0.5, 0.2});
  CHECK(headline(t) == before);
  CHECK(code_of([] { headline(PruneTrace{}); }) == ErrorCode::EmptyTrace);
}

TEST_CASE("summaries and improvements") {
  std::vector<PruneTrace> ts;
  for (const char* seed : {"1", "2", "3", "4"}) {
    ts.push_back(run("channel", "l1", seed, 0.20));
    ts.push_back(run("domino-io", "l1", seed, 0.30));
    ts.push_back(run("channel", "l1-avg", seed, 0.20));
    ts.push_back(run("domino-io", "l1-avg", seed, 0.45));
  }
  const auto s = summarize(ts);
  REQUIRE(s.size() == 4);
  CHECK(s[0].variant == "channel");
  CHECK(s[0].headlines.size() == 4);
  CHECK(s[0].mean == doctest::Approx(0.20));
  const Improvements imp = improvements(s);
  REQUIRE(imp.per_variant.size() == 1);
  CHECK(imp.per_variant[0].average == doctest::Approx((0.10 + 0.25) / 2));
  CHECK(imp.per_variant[0].best_vs_best == doctest::Approx(0.25));

  std::ostringstream out;
  write_summary_csv(s, out);
  CHECK(out.str().find("domino-io,l1-avg,4,45.00,45.00,") != std::string::npos);
}

TEST_CASE("improvements are antisymmetric") {
  std::vector<PruneTrace> ts = {run("channel", "l1", "1", 0.2), run("domino-o", "l1", "1", 0.3)};
  const auto fwd = improvements(summarize(ts));
  for (auto& t : ts) t.metadata["variant"] = t.metadata["variant"] == "channel" ? "domino-o" : "channel";
  const auto rev = improvements(summarize(ts));
  CHECK(fwd.per_variant[0].average == doctest::Approx(-rev.per_variant[0].average));
  CHECK(fwd.per_variant[0].best_vs_best == doctest::Approx(-rev.per_variant[0].best_vs_best));
}

TEST_CASE("single seed: mean equals the value") {
  const auto s = summarize({run("channel", "l1", "9", 0.37)});
  CHECK(s[0].mean == s[0].max);
  CHECK(s[0].mean == doctest::Approx(0.37));
}

TEST_CASE("report guards") {
  CHECK(code_of([] { improvements(summarize({run("domino-io", "l1", "1", 0.3)})); }) == ErrorCode::MissingBaseline);
  CHECK(code_of([] {
          improvements(summarize({run("channel", "l1-avg", "1", 0.3), run("domino-io", "l1", "1", 0.3)}));
        }) == ErrorCode::MissingBaseline);
  auto a = run("channel", "l1", "1", 0.3), b = run("channel", "l1", "2", 0.3);
  b.stop_drop = 2.0;
  CHECK(code_of([&] { summarize({a, b}); }) == ErrorCode::InvalidArgument);
}
