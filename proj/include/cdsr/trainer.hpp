#pragma once

#include "cdsr/augment.hpp"
#include "cdsr/common.hpp"
#include "cdsr/corpus.hpp"
#include "cdsr/evaluator.hpp"
#include "cdsr/graph.hpp"
#include "cdsr/objective.hpp"
#include "cdsr/params.hpp"
#include "cdsr/seqmodel.hpp"
#include "cdsr/spectrum.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cdsr {

// Normalized co-occurrence graphs built from the training sequences.
struct TrainGraphs {
  SparseAdjacency mixed, x, y;           // symmetric-normalized
  PropagationOperand op_mixed, op_x, op_y;
};
TrainGraphs build_graphs(const std::vector<CrossDomainSequence>& train,
                         const DomainVocab& vocab, int window);

// Plain-value propagated tables for evaluation (raw tables for the
// non-graph encoder kinds).
EvalTables eval_tables(const ParameterSet& params, const TrainGraphs& graphs,
                       const HyperParams& hp);

// Every stochastic input of one optimization step, drawn up front so the
// step itself is a deterministic function of (parameters, draws).
struct StepDraws {
  Mat eps_x, eps_y;    // per-sequence noise, B x d each
  Mat eps_vx, eps_vy;  // per-domain filter draws, 1 x d
  DropoutMasks drop_mixed, drop_x, drop_y;
};
StepDraws draw_step(int b, int n, const HyperParams& hp, Rng& rng);

struct StepStats {
  double total = 0, single_x = 0, single_y = 0;
  double gen_x = 0, gen_y = 0, cross = 0, align = 0;
  bool degenerate_filter = false;
};

// Assembles the annealed multi-task objective for one mini-batch on the
// tape: propagation, augmentation + intra contrast, filtered alignment,
// the three encoder views, and both next-item losses.
ad::Var build_step(ad::Tape& t, nn::Binder& b, ParameterSet& p, const HyperParams& hp,
                   const TrainGraphs& graphs, const std::vector<PaddedSequence>& seqs,
                   const SeqBatch& batch, double eta, const StepDraws& draws,
                   StepStats* stats = nullptr);

// Adam with bias correction; moments are stored in parameter-visit order.
struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step = 0;
  std::vector<Mat> m, v;
  void init_like(ParameterSet& p);
  void apply(ParameterSet& p, const std::vector<Mat>& grads, double lr);
};

// Grabs d(loss)/d(tensor) for every parameter in visit order (zeros for
// tensors the step never touched).
std::vector<Mat> collect_grads(const ad::Tape& t, const nn::Binder& b,
                               ParameterSet& p);

struct EpochLosses {
  double total = 0, single_x = 0, single_y = 0, gen = 0, cross = 0, align = 0;
  double eta = 1.0;
  int batches = 0;
};

struct TrainState {
  ParameterSet params;
  AdamState adam;
  int epoch = 0;
  Rng rng{0};
};
TrainState init_train_state(const HyperParams& hp, const DomainVocab& vocab);

EpochLosses train_epoch(TrainState& st, const std::vector<CrossDomainSequence>& train,
                        const TrainGraphs& graphs, const DomainVocab& vocab,
                        const HyperParams& hp);

struct EpochRecord {
  int epoch = 0;
  EpochLosses losses;
  double val_mrr_x = 0, val_mrr_y = 0, val_mrr = 0;
};

struct FitResult {
  ParameterSet best_params;
  int best_epoch = -1;
  double best_val_mrr = 0;
  int epochs_run = 0;
  std::vector<EpochRecord> history;
};

FitResult fit(const DatasetSplit& split, const DomainVocab& vocab,
              const HyperParams& hp);

struct GradCheckReport {
  double max_rel_err = 0;
  std::string worst_tensor;
  int entries_checked = 0;
};

// Central finite differences of the full step objective over every
// parameter entry; meant for tiny widths and vocabularies.
GradCheckReport grad_check(const DatasetSplit& split, const DomainVocab& vocab,
                           const HyperParams& hp, double fd_step = 1e-5);

}  // namespace cdsr
