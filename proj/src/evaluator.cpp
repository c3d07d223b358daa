#include "cdsr/evaluator.hpp"

#include "cdsr/autodiff.hpp"
#include "cdsr/seqmodel.hpp"

#include <algorithm>
#include <cmath>

namespace cdsr {

namespace {
constexpr int kEvalChunk = 256;
}

int rank_of(const Eigen::RowVectorXd& scores, int target) {
  CDSR_CHECK(target >= 0 && target < scores.size(), "rank target out of range");
  const double s = scores(target);
  int higher = 0;
  for (int j = 0; j < scores.size(); ++j)
    if (j != target && scores(j) > s) ++higher;
  return 1 + higher;
}

int rank_target(const Eigen::RowVectorXd& h_dom, const Eigen::RowVectorXd& h_mixed,
                const Mat& w, int target) {
  Eigen::RowVectorXd scores = (h_dom + h_mixed) * w;
  return rank_of(scores, target);
}

InstanceMetrics instance_metrics(int rank) {
  CDSR_CHECK(rank >= 1, "ranks start at 1");
  InstanceMetrics m;
  m.mrr = 1.0 / rank;
  m.recall10 = rank <= 10 ? 1.0 : 0.0;
  m.recall20 = rank <= 20 ? 1.0 : 0.0;
  const double gain = 1.0 / std::log2(static_cast<double>(rank) + 1.0);
  m.ndcg10 = rank <= 10 ? gain : 0.0;
  m.ndcg20 = rank <= 20 ? gain : 0.0;
  return m;
}

void validate_report(const MetricsReport& report) {
  for (const DomainMetrics* dm : {&report.x, &report.y}) {
    if (dm->n_instances == 0) continue;
    for (double v : {dm->mrr, dm->ndcg10, dm->ndcg20, dm->recall10, dm->recall20})
      CDSR_CHECK(v >= 0.0 && v <= 1.0, "metric outside [0,1]");
    CDSR_CHECK(dm->recall10 <= dm->recall20 + 1e-12, "top-10 recall exceeds top-20");
    CDSR_CHECK(dm->ndcg10 <= dm->ndcg20 + 1e-12, "top-10 gain exceeds top-20");
  }
}

MetricsReport evaluate(ParameterSet& params, const EvalTables& tables,
                       const DomainVocab& vocab,
                       const std::vector<EvalInstance>& instances,
                       Partition which, int n_window) {
  std::vector<const EvalInstance*> picked;
  for (const auto& inst : instances)
    if (inst.partition == which) picked.push_back(&inst);
  CDSR_CHECK(!picked.empty(), "no instances in the requested partition");

  MetricsReport report;
  report.partition = which == Partition::Val ? "val" : "test";
  double sums[2][5] = {{0}};
  int counts[2] = {0, 0};

  for (size_t lo = 0; lo < picked.size(); lo += kEvalChunk) {
    const size_t hi = std::min(picked.size(), lo + kEvalChunk);
    std::vector<PaddedSequence> seqs;
    seqs.reserve(hi - lo);
    for (size_t i = lo; i < hi; ++i)
      seqs.push_back(truncate_pad_tokens(picked[i]->user_id, picked[i]->prefix,
                                         vocab, n_window));
    SeqBatch batch = make_batch(seqs);

    ad::Tape t;
    nn::Binder b(t, /*trainable=*/false);
    UserStates us = user_states_t(t, b, params.encoder, batch,
                                  t.constant(tables.mixed), t.constant(tables.x),
                                  t.constant(tables.y), nullptr, nullptr, nullptr);
    const Mat& hm = t.val(us.mixed);
    const Mat& hx = t.val(us.x);
    const Mat& hy = t.val(us.y);

    for (size_t i = lo; i < hi; ++i) {
      const EvalInstance& inst = *picked[i];
      const int bi = static_cast<int>(i - lo);
      const int flat = bi * batch.n + (batch.n - 1);
      CDSR_CHECK(batch.mixed_rows[static_cast<size_t>(flat)] >= 0,
                 "evaluation prefix is empty");
      const bool is_x = inst.domain == Domain::X;
      const Mat& head = is_x ? params.head_x : params.head_y;
      const Mat& hd = is_x ? hx : hy;
      const int rank =
          rank_target(hd.row(flat), hm.row(flat), head, inst.target_local);
      InstanceMetrics m = instance_metrics(rank);
      const int di = is_x ? 0 : 1;
      sums[di][0] += m.mrr;
      sums[di][1] += m.ndcg10;
      sums[di][2] += m.ndcg20;
      sums[di][3] += m.recall10;
      sums[di][4] += m.recall20;
      counts[di] += 1;
    }
  }

  auto fill = [&](int di, DomainMetrics& dm) {
    dm.n_instances = counts[di];
    if (counts[di] == 0) return;
    dm.mrr = sums[di][0] / counts[di];
    dm.ndcg10 = sums[di][1] / counts[di];
    dm.ndcg20 = sums[di][2] / counts[di];
    dm.recall10 = sums[di][3] / counts[di];
    dm.recall20 = sums[di][4] / counts[di];
  };
  fill(0, report.x);
  fill(1, report.y);
  validate_report(report);
  return report;
}

}  // namespace cdsr
