#include "cdsr/objective.hpp"

#include <algorithm>

namespace cdsr {

double anneal_eta(int step, int n_anneal) {
  CDSR_CHECK(step >= 0, "annealing step must be non-negative");
  CDSR_CHECK(n_anneal > 0, "annealing horizon must be positive");
  return std::max(0.5, 1.0 - 0.5 * static_cast<double>(step) / n_anneal);
}

RecTargets single_domain_targets(const SeqBatch& batch, Domain dom) {
  RecTargets out;
  for (int bi = 0; bi < batch.b; ++bi) {
    for (int t = 0; t + 1 < batch.n; ++t) {
      const size_t flat = static_cast<size_t>(bi) * batch.n + t;
      if (batch.mixed_rows[flat] < 0 || batch.mixed_rows[flat + 1] < 0) continue;
      if (batch.dom[flat + 1] != dom) continue;
      const int32_t local =
          dom == Domain::X ? batch.x_local[flat + 1] : batch.y_local[flat + 1];
      CDSR_CHECK(local >= 0, "successor lacks a local id in its own domain");
      out.rows.push_back(static_cast<int32_t>(flat));
      out.targets.push_back(local);
    }
  }
  return out;
}

CrossTargets cross_domain_targets(const SeqBatch& batch) {
  CrossTargets out;
  out.x = single_domain_targets(batch, Domain::X);
  out.y = single_domain_targets(batch, Domain::Y);
  return out;
}

namespace {

// Sum of -log softmax over the gathered rows, then divide by the row count.
ad::Var mean_ce(ad::Tape& t, ad::Var states, ad::Var w, const RecTargets& tg) {
  ad::Var rows = t.gather_rows(states, tg.rows);
  ad::Var logits = t.matmul(rows, w);
  ad::Var sum = t.ce_sum(logits, tg.targets);
  return t.scale(sum, 1.0 / static_cast<double>(tg.rows.size()));
}

}  // namespace

ad::Var single_domain_loss_t(ad::Tape& t, ad::Var h_dom, ad::Var h_mixed, ad::Var w,
                             const RecTargets& tg, bool* contributed) {
  if (contributed != nullptr) *contributed = !tg.empty();
  if (tg.empty()) return t.constant(Mat::Zero(1, 1));
  ad::Var states = t.add(h_dom, h_mixed);
  return mean_ce(t, states, w, tg);
}

ad::Var cross_domain_loss_t(ad::Tape& t, ad::Var h_mixed, ad::Var w_x, ad::Var w_y,
                            const CrossTargets& tg, bool* contributed) {
  const size_t total = tg.x.rows.size() + tg.y.rows.size();
  if (contributed != nullptr) *contributed = total > 0;
  if (total == 0) return t.constant(Mat::Zero(1, 1));
  std::vector<ad::Var> sums;
  if (!tg.x.empty()) {
    ad::Var logits = t.matmul(t.gather_rows(h_mixed, tg.x.rows), w_x);
    sums.push_back(t.ce_sum(logits, tg.x.targets));
  }
  if (!tg.y.empty()) {
    ad::Var logits = t.matmul(t.gather_rows(h_mixed, tg.y.rows), w_y);
    sums.push_back(t.ce_sum(logits, tg.y.targets));
  }
  ad::Var sum = sums.size() == 1 ? sums.front() : t.add(sums[0], sums[1]);
  return t.scale(sum, 1.0 / static_cast<double>(total));
}

ad::Var total_loss_t(ad::Tape& t, const LossTerms& p, double eta, double lambda1,
                     double lambda2) {
  ad::Var intra = t.add(t.add(p.single_x, p.single_y),
                        t.scale(t.add(p.gen_x, p.gen_y), lambda1));
  ad::Var inter = t.add(p.cross, t.scale(p.align, lambda2));
  return t.add(t.scale(intra, eta), t.scale(inter, 1.0 - eta));
}

double total_loss_plain(double single_x, double single_y, double gen_x, double gen_y,
                        double cross, double align, double eta, double lambda1,
                        double lambda2) {
  return eta * (single_x + single_y + lambda1 * (gen_x + gen_y)) +
         (1.0 - eta) * (cross + lambda2 * align);
}

}  // namespace cdsr
