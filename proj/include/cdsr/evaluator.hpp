#pragma once

#include "cdsr/common.hpp"
#include "cdsr/corpus.hpp"
#include "cdsr/params.hpp"

#include <string>
#include <vector>

namespace cdsr {

// 1 + number of strictly higher scores (optimistic ties).
int rank_of(const Eigen::RowVectorXd& scores, int target);

// Scores the full domain vocabulary as (h_dom + h_mixed) W.
int rank_target(const Eigen::RowVectorXd& h_dom, const Eigen::RowVectorXd& h_mixed,
                const Mat& w, int target);

struct InstanceMetrics {
  double mrr = 0, ndcg10 = 0, ndcg20 = 0, recall10 = 0, recall20 = 0;
};
InstanceMetrics instance_metrics(int rank);

struct DomainMetrics {
  double mrr = 0, ndcg10 = 0, ndcg20 = 0, recall10 = 0, recall20 = 0;
  int n_instances = 0;
};

struct MetricsReport {
  DomainMetrics x, y;
  std::string partition;
  double mean_mrr() const { return 0.5 * (x.mrr + y.mrr); }
};

// Range and ordering sanity on every aggregate.
void validate_report(const MetricsReport& report);

// The embedding tables the forward pass reads: propagated for the
// graph-enhanced encoder, raw otherwise.
struct EvalTables {
  Mat mixed, x, y;
};

// Per-instance next-item ranking over the full domain vocabulary. Prefixes
// are truncated to the training window; states are read at the last real
// position of the window.
MetricsReport evaluate(ParameterSet& params, const EvalTables& tables,
                       const DomainVocab& vocab,
                       const std::vector<EvalInstance>& instances,
                       Partition which, int n_window);

}  // namespace cdsr
