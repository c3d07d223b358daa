#include "cdsr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cdsr {

TrainGraphs build_graphs(const std::vector<CrossDomainSequence>& train,
                         const DomainVocab& vocab, int window) {
  TrainGraphs g;
  g.mixed = normalize_symmetric(build_mixed_graph(train, vocab, window));
  g.x = normalize_symmetric(
      build_domain_graph(train, Domain::X, window, vocab.size(Domain::X)));
  g.y = normalize_symmetric(
      build_domain_graph(train, Domain::Y, window, vocab.size(Domain::Y)));
  g.op_mixed = PropagationOperand::from(g.mixed);
  g.op_x = PropagationOperand::from(g.x);
  g.op_y = PropagationOperand::from(g.y);
  return g;
}

EvalTables eval_tables(const ParameterSet& params, const TrainGraphs& graphs,
                       const HyperParams& hp) {
  EvalTables t;
  if (hp.encoder == EncoderKind::GnnAtt) {
    PropagationConfig cfg{hp.layers};
    t.mixed = propagate(graphs.mixed, params.embeddings, cfg);
    t.x = propagate(graphs.x, params.emb_x(), cfg);
    t.y = propagate(graphs.y, params.emb_y(), cfg);
  } else {
    t.mixed = params.embeddings;
    t.x = params.emb_x();
    t.y = params.emb_y();
  }
  return t;
}

StepDraws draw_step(int b, int n, const HyperParams& hp, Rng& rng) {
  StepDraws d;
  d.eps_x = randn(b, hp.d, rng);
  d.eps_y = randn(b, hp.d, rng);
  d.eps_vx = randn(1, hp.d, rng);
  d.eps_vy = randn(1, hp.d, rng);
  const int n_blocks = hp.encoder == EncoderKind::Recurrent
                           ? 0
                           : static_cast<int>(hp.n_blocks);
  d.drop_mixed = draw_dropout(b * n, hp.d, n_blocks, hp.dropout, rng);
  d.drop_x = draw_dropout(b * n, hp.d, n_blocks, hp.dropout, rng);
  d.drop_y = draw_dropout(b * n, hp.d, n_blocks, hp.dropout, rng);
  return d;
}

namespace {

// view-position item indices per step for the noise encoder
std::vector<std::vector<int32_t>> domain_steps(const std::vector<PaddedSequence>& seqs,
                                               Domain dom) {
  const int n = seqs.front().n;
  std::vector<std::vector<int32_t>> steps(
      static_cast<size_t>(n), std::vector<int32_t>(seqs.size(), -1));
  for (size_t row = 0; row < seqs.size(); ++row) {
    const auto& view = dom == Domain::X ? seqs[row].view_x : seqs[row].view_y;
    for (int t = 0; t < n; ++t)
      steps[static_cast<size_t>(t)][row] = view[static_cast<size_t>(t)];
  }
  return steps;
}

std::vector<int32_t> to_global(const std::vector<int32_t>& locals, Domain dom,
                               int x_items) {
  std::vector<int32_t> out(locals.size());
  for (size_t i = 0; i < locals.size(); ++i)
    out[i] = dom == Domain::X ? locals[i] : locals[i] + x_items;
  return out;
}

double scalar(const ad::Tape& t, ad::Var v) { return t.val(v)(0, 0); }

}  // namespace

ad::Var build_step(ad::Tape& t, nn::Binder& b, ParameterSet& p, const HyperParams& hp,
                   const TrainGraphs& graphs, const std::vector<PaddedSequence>& seqs,
                   const SeqBatch& batch, double eta, const StepDraws& draws,
                   StepStats* stats) {
  const bool gen_active = hp.lambda1 > 0.0 && !hp.ablation.no_generation;
  const bool align_active = hp.lambda2 > 0.0 && !hp.ablation.no_alignment;

  ad::Var emb = b[p.embeddings];
  ad::Var raw_x = t.slice_rows(emb, 0, p.x_items);
  ad::Var raw_y = t.slice_rows(emb, p.x_items, p.y_items);

  const bool need_prop =
      hp.encoder == EncoderKind::GnnAtt || gen_active || align_active;
  ad::Var ehat_mixed, ehat_x, ehat_y;
  if (need_prop) {
    PropagationConfig cfg{hp.layers};
    ehat_mixed = propagate_t(t, graphs.op_mixed, emb, cfg);
    ehat_x = propagate_t(t, graphs.op_x, raw_x, cfg);
    ehat_y = propagate_t(t, graphs.op_y, raw_y, cfg);
  }

  LossTerms terms;
  terms.gen_x = t.constant(Mat::Zero(1, 1));
  terms.gen_y = t.constant(Mat::Zero(1, 1));
  terms.align = t.constant(Mat::Zero(1, 1));

  // Augmentation + intra contrast, and the augmented rows the alignment
  // branch pairs with. Without generation the "augmented" view is just the
  // propagated domain table.
  ContrastSet cs_x, cs_y;
  ad::Var pos_x, pos_y;  // m x d positives per domain
  if (gen_active || align_active) {
    cs_x = collect_contrast_items(seqs, Domain::X);
    cs_y = collect_contrast_items(seqs, Domain::Y);
    auto build_domain = [&](Domain dom, const ContrastSet& cs, ad::Var ehat_dom,
                            const NoiseGeneratorParams& gen, const Mat& eps,
                            ad::Var* positives) -> ad::Var {
      if (cs.items.empty()) return t.constant(Mat::Zero(1, 1));
      ad::Var anchors = t.gather_rows(ehat_dom, cs.items);
      if (!gen_active) {
        *positives = anchors;
        return t.constant(Mat::Zero(1, 1));
      }
      ad::Var beta;
      if (hp.ablation.std_normal_noise) {
        beta = t.constant(eps);
      } else {
        ad::Var h = encode_batch_t(t, b, gen.encoder, ehat_dom, domain_steps(seqs, dom));
        beta = sample_noise_t(t, b, gen, h, eps);
      }
      ad::Var owner_noise = t.gather_rows(beta, cs.owners);
      ad::Var augmented = t.add(anchors, t.scale(owner_noise, hp.alpha));
      *positives = augmented;
      return infonce_pairs_t(t, anchors, augmented, hp.tau);
    };
    terms.gen_x = build_domain(Domain::X, cs_x, ehat_x, p.noise_x, draws.eps_x, &pos_x);
    terms.gen_y = build_domain(Domain::Y, cs_y, ehat_y, p.noise_y, draws.eps_y, &pos_y);
  }

  if (align_active) {
    CDSR_CHECK(!cs_x.items.empty() || !cs_y.items.empty(),
               "alignment requires at least one in-batch item");
    auto filtered_global = [&](const Mat& mu, const Mat& eps_v, bool* degen) {
      if (hp.ablation.no_asf) return ehat_mixed;
      ad::Var v = t.add(b[mu], t.constant(eps_v));
      return apply_rank1_filter_t(t, ehat_mixed, v, degen);
    };
    bool degen_x = false, degen_y = false;
    ad::Var zero_rows = t.constant(Mat::Zero(0, p.d));
    ad::Var ax = zero_rows, ay = zero_rows, px = zero_rows, py = zero_rows;
    if (!cs_x.items.empty()) {
      ad::Var ebar_x = filtered_global(p.filter.mu_x, draws.eps_vx, &degen_x);
      ax = t.gather_rows(ebar_x, to_global(cs_x.items, Domain::X, p.x_items));
      px = pos_x;
    }
    if (!cs_y.items.empty()) {
      ad::Var ebar_y = filtered_global(p.filter.mu_y, draws.eps_vy, &degen_y);
      ay = t.gather_rows(ebar_y, to_global(cs_y.items, Domain::Y, p.x_items));
      py = pos_y;
    }
    terms.align = inter_infonce_t(t, ax, px, ay, py, hp.tau);
    if (stats != nullptr) stats->degenerate_filter = degen_x || degen_y;
  }

  // Sequence encoding over the three views plus the two next-item losses.
  ad::Var table_mixed = hp.encoder == EncoderKind::GnnAtt ? ehat_mixed : emb;
  ad::Var table_x = hp.encoder == EncoderKind::GnnAtt ? ehat_x : raw_x;
  ad::Var table_y = hp.encoder == EncoderKind::GnnAtt ? ehat_y : raw_y;
  const bool use_drop = hp.dropout > 0.0;
  UserStates us = user_states_t(t, b, p.encoder, batch, table_mixed, table_x, table_y,
                                use_drop ? &draws.drop_mixed : nullptr,
                                use_drop ? &draws.drop_x : nullptr,
                                use_drop ? &draws.drop_y : nullptr);

  RecTargets tx = single_domain_targets(batch, Domain::X);
  RecTargets ty = single_domain_targets(batch, Domain::Y);
  CrossTargets tc = cross_domain_targets(batch);
  terms.single_x = single_domain_loss_t(t, us.x, us.mixed, b[p.head_x], tx);
  terms.single_y = single_domain_loss_t(t, us.y, us.mixed, b[p.head_y], ty);
  terms.cross = cross_domain_loss_t(t, us.mixed, b[p.head_x], b[p.head_y], tc);

  ad::Var total = total_loss_t(t, terms, eta, hp.lambda1, hp.lambda2);
  if (stats != nullptr) {
    stats->total = scalar(t, total);
    stats->single_x = scalar(t, terms.single_x);
    stats->single_y = scalar(t, terms.single_y);
    stats->gen_x = scalar(t, terms.gen_x);
    stats->gen_y = scalar(t, terms.gen_y);
    stats->cross = scalar(t, terms.cross);
    stats->align = scalar(t, terms.align);
  }
  return total;
}

void AdamState::init_like(ParameterSet& p) {
  m.clear();
  v.clear();
  step = 0;
  p.visit([&](const std::string&, Mat& mat) {
    m.push_back(Mat::Zero(mat.rows(), mat.cols()));
    v.push_back(Mat::Zero(mat.rows(), mat.cols()));
  });
}

void AdamState::apply(ParameterSet& p, const std::vector<Mat>& grads, double lr) {
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  size_t i = 0;
  p.visit([&](const std::string&, Mat& mat) {
    CDSR_CHECK(i < grads.size(), "gradient list shorter than parameter list");
    const Mat& g = grads[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g.cwiseProduct(g);
    Mat mhat = m[i] / bc1;
    Mat vhat = v[i] / bc2;
    mat.array() -= lr * mhat.array() / (vhat.array().sqrt() + eps);
    ++i;
  });
  CDSR_CHECK(i == grads.size(), "gradient list longer than parameter list");
}

std::vector<Mat> collect_grads(const ad::Tape& t, const nn::Binder& b,
                               ParameterSet& p) {
  std::vector<Mat> grads;
  p.visit([&](const std::string&, Mat& mat) {
    auto var = b.bound(mat);
    if (var.has_value())
      grads.push_back(t.grad(*var));
    else
      grads.push_back(Mat::Zero(mat.rows(), mat.cols()));
  });
  return grads;
}

TrainState init_train_state(const HyperParams& hp, const DomainVocab& vocab) {
  TrainState st;
  st.params.init(hp, vocab.size(Domain::X), vocab.size(Domain::Y));
  st.adam.init_like(st.params);
  st.epoch = 0;
  st.rng = Rng(mix_seed(hp.seed, 0x7ea1));
  return st;
}

EpochLosses train_epoch(TrainState& st, const std::vector<CrossDomainSequence>& train,
                        const TrainGraphs& graphs, const DomainVocab& vocab,
                        const HyperParams& hp) {
  CDSR_CHECK(!train.empty(), "cannot train on an empty split");
  const double eta = hp.ablation.no_annealing
                         ? 0.5
                         : anneal_eta(st.epoch, hp.n_anneal);
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), st.rng);

  EpochLosses acc;
  acc.eta = eta;
  for (size_t lo = 0; lo < order.size(); lo += static_cast<size_t>(hp.batch)) {
    const size_t hi = std::min(order.size(), lo + static_cast<size_t>(hp.batch));
    std::vector<PaddedSequence> seqs;
    seqs.reserve(hi - lo);
    for (size_t i = lo; i < hi; ++i)
      seqs.push_back(truncate_pad(train[order[i]], vocab, hp.n_window));
    SeqBatch batch = make_batch(seqs);
    StepDraws draws = draw_step(batch.b, batch.n, hp, st.rng);

    ad::Tape t;
    nn::Binder b(t, /*trainable=*/true);
    StepStats stats;
    ad::Var total =
        build_step(t, b, st.params, hp, graphs, seqs, batch, eta, draws, &stats);
    if (!std::isfinite(stats.total)) {
      std::ostringstream oss;
      oss << "non-finite loss at epoch " << st.epoch << " batch " << acc.batches
          << ": total=" << stats.total << " single_x=" << stats.single_x
          << " single_y=" << stats.single_y << " gen_x=" << stats.gen_x
          << " gen_y=" << stats.gen_y << " cross=" << stats.cross
          << " align=" << stats.align;
      fail(oss.str());
    }
    t.backward(total);
    std::vector<Mat> grads = collect_grads(t, b, st.params);
    st.adam.apply(st.params, grads, hp.lr);

    acc.total += stats.total;
    acc.single_x += stats.single_x;
    acc.single_y += stats.single_y;
    acc.gen += stats.gen_x + stats.gen_y;
    acc.cross += stats.cross;
    acc.align += stats.align;
    acc.batches += 1;
  }
  if (acc.batches > 0) {
    acc.total /= acc.batches;
    acc.single_x /= acc.batches;
    acc.single_y /= acc.batches;
    acc.gen /= acc.batches;
    acc.cross /= acc.batches;
    acc.align /= acc.batches;
  }
  st.epoch += 1;
  return acc;
}

FitResult fit(const DatasetSplit& split, const DomainVocab& vocab,
              const HyperParams& hp) {
  hp.validate();
  TrainGraphs graphs = build_graphs(split.train, vocab, hp.cooccur_window);
  TrainState st = init_train_state(hp, vocab);

  FitResult out;
  double best = -1.0;
  int since_best = 0;
  for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
    EpochLosses losses = train_epoch(st, split.train, graphs, vocab, hp);
    EvalTables tables = eval_tables(st.params, graphs, hp);
    MetricsReport val = evaluate(st.params, tables, vocab, split.eval_instances,
                                 Partition::Val, hp.n_window);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.losses = losses;
    rec.val_mrr_x = val.x.mrr;
    rec.val_mrr_y = val.y.mrr;
    rec.val_mrr = val.mean_mrr();
    out.history.push_back(rec);
    out.epochs_run = epoch + 1;

    if (rec.val_mrr > best) {
      best = rec.val_mrr;
      out.best_epoch = epoch;
      out.best_val_mrr = best;
      out.best_params = st.params;
      since_best = 0;
    } else {
      since_best += 1;
      if (since_best >= hp.patience) break;
    }
  }
  CDSR_CHECK(out.best_epoch >= 0, "no epoch produced a validation report");
  return out;
}

GradCheckReport grad_check(const DatasetSplit& split, const DomainVocab& vocab,
                           const HyperParams& hp, double fd_step) {
  hp.validate();
  CDSR_CHECK(hp.d <= 8, "gradient audit is meant for tiny widths");
  CDSR_CHECK(vocab.total() <= 12, "gradient audit is meant for tiny vocabularies");
  TrainGraphs graphs = build_graphs(split.train, vocab, hp.cooccur_window);

  ParameterSet params;
  params.init(hp, vocab.size(Domain::X), vocab.size(Domain::Y));
  // Audit at a generic point: the fresh init is symmetric (zero biases, zero
  // padded rows), which parks rectifier pre-activations exactly on their kink
  // where one-sided slopes and finite differences legitimately disagree.
  Rng jitter(mix_seed(hp.seed, 0x317e));
  params.visit([&](const std::string&, Mat& mat) {
    mat += 0.05 * randn(static_cast<int>(mat.rows()), static_cast<int>(mat.cols()),
                        jitter);
  });

  std::vector<PaddedSequence> seqs;
  const size_t take = std::min(split.train.size(), static_cast<size_t>(hp.batch));
  for (size_t i = 0; i < take; ++i)
    seqs.push_back(truncate_pad(split.train[i], vocab, hp.n_window));
  SeqBatch batch = make_batch(seqs);
  Rng rng(mix_seed(hp.seed, 0xfd));
  StepDraws draws = draw_step(batch.b, batch.n, hp, rng);
  // Interior schedule point so both objective branches carry weight.
  const double eta = 0.75;

  ad::Tape t;
  nn::Binder b(t, /*trainable=*/true);
  ad::Var total = build_step(t, b, params, hp, graphs, seqs, batch, eta, draws);
  t.backward(total);
  std::vector<Mat> analytic = collect_grads(t, b, params);

  auto value_at = [&]() {
    ad::Tape t2;
    nn::Binder b2(t2, false);
    return t2.val(build_step(t2, b2, params, hp, graphs, seqs, batch, eta, draws))(0, 0);
  };

  GradCheckReport report;
  size_t ti = 0;
  params.visit([&](const std::string& name, Mat& mat) {
    const Mat& ga = analytic[ti];
    for (int i = 0; i < mat.rows(); ++i) {
      for (int j = 0; j < mat.cols(); ++j) {
        const double keep = mat(i, j);
        mat(i, j) = keep + fd_step;
        const double up = value_at();
        mat(i, j) = keep - fd_step;
        const double dn = value_at();
        mat(i, j) = keep;
        const double fd = (up - dn) / (2.0 * fd_step);
        // The floor turns near-zero entries into an absolute comparison;
        // below it, central differences are dominated by f(x)*eps/step
        // roundoff rather than by the derivative.
        const double denom = std::max({std::abs(fd), std::abs(ga(i, j)), 1e-5});
        const double rel = std::abs(fd - ga(i, j)) / denom;
        report.entries_checked += 1;
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_tensor = name;
        }
      }
    }
    ++ti;
  });
  return report;
}

}  // namespace cdsr
