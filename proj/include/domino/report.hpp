#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "domino/pruner.hpp"

namespace domino {

/// Largest weights_removed_cum over evaluated records within the accuracy
/// bound; 0 when none qualifies. Throws EmptyTrace.
double headline(const PruneTrace& trace, double initial_accuracy, double stop_drop);
double headline(const PruneTrace& trace);

struct ConditionSummary {
  std::string variant;  // channel, domino-o, domino-io
  std::string metric;   // l1, taylor-w-avg, ...
  std::vector<std::string> seeds;
  std::vector<double> headlines;  // one per seed, same order
  double mean = 0.0;
  double max = 0.0;
};

/// Groups traces by their variant/metric metadata, seeds sorted. Throws
/// InvalidArgument when traces disagree on stop_drop or lack metadata.
std::vector<ConditionSummary> summarize(const std::vector<PruneTrace>& traces);

struct MetricImprovement {
  std::string variant;
  std::string metric;
  double value = 0.0;  // domino mean - channel mean
};

struct VariantImprovement {
  std::string variant;
  double average = 0.0;       // mean over metrics of the per-metric improvement
  double best_vs_best = 0.0;  // best domino condition mean - best channel condition mean
};

struct Improvements {
  std::vector<MetricImprovement> per_metric;
  std::vector<VariantImprovement> per_variant;
};

/// Throws MissingBaseline when a domino condition has no channel counterpart.
Improvements improvements(const std::vector<ConditionSummary>& summaries);

/// variant,metric,runs,mean_pct,max_pct,per_seed_pct
void write_summary_csv(const std::vector<ConditionSummary>& summaries, std::ostream& out);
/// statistic,variant,metric,improvement_pct
void write_improvements_csv(const Improvements& imp, std::ostream& out);
/// Whitespace columns for gnuplot: metric, then the mean pct of each variant.
void write_gnuplot_dat(const std::vector<ConditionSummary>& summaries, std::ostream& out);

}  // namespace domino
