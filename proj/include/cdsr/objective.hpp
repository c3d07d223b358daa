#pragma once

#include "cdsr/autodiff.hpp"
#include "cdsr/common.hpp"
#include "cdsr/seqmodel.hpp"

#include <vector>

namespace cdsr {

// eta = max(0.5, 1 - 0.5 * step / n_anneal); step counts epochs.
double anneal_eta(int step, int n_anneal);

// Flat state rows t paired with the local id of the successor item at t+1.
struct RecTargets {
  std::vector<int32_t> rows;
  std::vector<int32_t> targets;
  bool empty() const { return rows.empty(); }
};

// Positions whose successor lies in `dom` (successor id in that domain's
// local space). Only real positions with a real successor contribute.
RecTargets single_domain_targets(const SeqBatch& batch, Domain dom);

struct CrossTargets {
  RecTargets x, y;  // every successor position, routed by successor domain
};
CrossTargets cross_domain_targets(const SeqBatch& batch);

// Mean over contributing positions of -log softmax((h_dom + h_mixed) W)[target].
// Empty target set contributes exactly 0 and clears *contributed.
ad::Var single_domain_loss_t(ad::Tape& t, ad::Var h_dom, ad::Var h_mixed, ad::Var w,
                             const RecTargets& tg, bool* contributed = nullptr);

// Mean of per-position negative log-likelihood under the head matching each
// successor's domain, scored from the mixed states alone.
ad::Var cross_domain_loss_t(ad::Tape& t, ad::Var h_mixed, ad::Var w_x, ad::Var w_y,
                            const CrossTargets& tg, bool* contributed = nullptr);

struct LossTerms {
  ad::Var single_x, single_y;  // next-item losses with domain-specific states
  ad::Var gen_x, gen_y;        // augmentation contrastive losses
  ad::Var cross;               // mixed-state routed next-item loss
  ad::Var align;               // cross-domain alignment contrastive loss
};

// eta*(single_x + single_y + lambda1*(gen_x + gen_y))
//   + (1-eta)*(cross + lambda2*align)
ad::Var total_loss_t(ad::Tape& t, const LossTerms& parts, double eta,
                     double lambda1, double lambda2);
double total_loss_plain(double single_x, double single_y, double gen_x, double gen_y,
                        double cross, double align, double eta, double lambda1,
                        double lambda2);

}  // namespace cdsr
