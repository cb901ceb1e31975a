#include "domino/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include "domino/error.hpp"

namespace domino {

namespace {

std::string pct(double fraction) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

const std::string& meta(const PruneTrace& t, const std::string& key) {
  auto it = t.metadata.find(key);
  if (it == t.metadata.end()) throw Error(ErrorCode::InvalidArgument, "trace lacks '" + key + "' metadata");
  return it->second;
}

const ConditionSummary* find(const std::vector<ConditionSummary>& s, const std::string& variant,
                             const std::string& metric) {
  for (const auto& c : s) {
    if (c.variant == variant && c.metric == metric) return &c;
  }
  return nullptr;
}

}  // namespace

double headline(const PruneTrace& trace, double initial_accuracy, double stop_drop) {
  if (trace.records.empty()) throw Error(ErrorCode::EmptyTrace, "trace has no records");
  double best = 0.0;
  for (const auto& r : trace.records) {
    if (r.accuracy && within_drop(*r.accuracy, initial_accuracy, stop_drop)) best = std::max(best, r.weights_removed_cum);
  }
  return best;
}

double headline(const PruneTrace& trace) { return headline(trace, trace.initial_accuracy, trace.stop_drop); }

std::vector<ConditionSummary> summarize(const std::vector<PruneTrace>& traces) {
  std::set<double> drops;
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> grouped;
  std::size_t unnamed = 0;
  for (const auto& t : traces) {
    drops.insert(t.stop_drop);
    auto seed_it = t.metadata.find("seed");
    const std::string seed = seed_it == t.metadata.end() ? "#" + std::to_string(unnamed++) : seed_it->second;
    auto& bucket = grouped[{meta(t, "variant"), meta(t, "metric")}];
    if (!bucket.emplace(seed, headline(t)).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate seed " + seed + " for " + meta(t, "variant") + "/" +
                                                  meta(t, "metric"));
    }
  }
  if (drops.size() > 1) throw Error(ErrorCode::InvalidArgument, "traces mix different stop_drop values");

  std::vector<ConditionSummary> out;
  for (const auto& [key, seeds] : grouped) {
    ConditionSummary c;
    c.variant = key.first;
    c.metric = key.second;
    double sum = 0.0;
    for (const auto& [seed, h] : seeds) {
      c.seeds.push_back(seed);
      c.headlines.push_back(h);
      sum += h;
      c.max = std::max(c.max, h);
    }
    c.mean = sum / static_cast<double>(seeds.size());
    out.push_back(std::move(c));
  }
  return out;
}

Improvements improvements(const std::vector<ConditionSummary>& summaries) {
  Improvements imp;
  std::set<std::string> variants;
  for (const auto& c : summaries) {
    if (c.variant != "channel") variants.insert(c.variant);
  }
  if (variants.empty()) throw Error(ErrorCode::MissingBaseline, "no domino conditions to compare");

  double best_channel = -1.0;
  for (const auto& c : summaries) {
    if (c.variant == "channel") best_channel = std::max(best_channel, c.mean);
  }
  for (const auto& v : variants) {
    VariantImprovement vi;
    vi.variant = v;
    double best = -1.0, sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : summaries) {
      if (c.variant != v) continue;
      const ConditionSummary* base = find(summaries, "channel", c.metric);
      if (!base) throw Error(ErrorCode::MissingBaseline, "no channel runs for metric " + c.metric);
      imp.per_metric.push_back({v, c.metric, c.mean - base->mean});
      sum += c.mean - base->mean;
      best = std::max(best, c.mean);
      ++n;
    }
    vi.average = sum / static_cast<double>(n);
    vi.best_vs_best = best - best_channel;
    imp.per_variant.push_back(vi);
  }
  return imp;
}

void write_summary_csv(const std::vector<ConditionSummary>& summaries, std::ostream& out) {
  out << "variant,metric,runs,mean_pct,max_pct,per_seed_pct\n";
  for (const auto& c : summaries) {
    std::string per_seed;
    for (std::size_t i = 0; i < c.seeds.size(); ++i) {
      per_seed += (i ? ";" : "") + c.seeds[i] + ":" + pct(c.headlines[i]);
    }
    out << c.variant << "," << c.metric << "," << c.seeds.size() << "," << pct(c.mean) << "," << pct(c.max) << ","
        << per_seed << "\n";
  }
}

void write_improvements_csv(const Improvements& imp, std::ostream& out) {
  out << "statistic,variant,metric,improvement_pct\n";
  for (const auto& m : imp.per_metric) out << "per-metric," << m.variant << "," << m.metric << "," << pct(m.value) << "\n";
  for (const auto& v : imp.per_variant) {
    out << "average," << v.variant << ",all," << pct(v.average) << "\n";
    out << "best-vs-best," << v.variant << ",all," << pct(v.best_vs_best) << "\n";
  }
}

void write_gnuplot_dat(const std::vector<ConditionSummary>& summaries, std::ostream& out) {
  std::set<std::string> metrics;
  for (const auto& c : summaries) metrics.insert(c.metric);
  const std::vector<std::string> variants = {"channel", "domino-o", "domino-io"};
  out << "# metric";
  for (const auto& v : variants) out << " " << v;
  out << "\n";
  for (const auto& m : metrics) {
    out << m;
    for (const auto& v : variants) {
      const ConditionSummary* c = find(summaries, v, m);
      out << " " << (c ? pct(c->mean) : "NaN");
    }
    out << "\n";
  }
}

}  // namespace domino
