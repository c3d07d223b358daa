#include "cdsr/seqmodel.hpp"

#include <cmath>

namespace cdsr {

std::string encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::GnnAtt: return "gnn-att";
    case EncoderKind::AttentionOnly: return "attention-only";
    case EncoderKind::Recurrent: return "recurrent";
  }
  fail("unknown encoder kind");
}

EncoderKind encoder_kind_parse(const std::string& name) {
  if (name == "gnn-att") return EncoderKind::GnnAtt;
  if (name == "attention-only") return EncoderKind::AttentionOnly;
  if (name == "recurrent") return EncoderKind::Recurrent;
  fail("unknown encoder kind '" + name + "'");
}

void AttentionBlockParams::init(int d, int d_ff, Rng& rng) {
  wq = nn::uniform_fanin(d, d, d, rng);
  wk = nn::uniform_fanin(d, d, d, rng);
  wv = nn::uniform_fanin(d, d, d, rng);
  wo = nn::uniform_fanin(d, d, d, rng);
  ln1_g = Mat::Ones(1, d);
  ln1_b = Mat::Zero(1, d);
  w1 = nn::uniform_fanin(d, d_ff, d, rng);
  b1 = Mat::Zero(1, d_ff);
  w2 = nn::uniform_fanin(d_ff, d, d_ff, rng);
  b2 = Mat::Zero(1, d);
  ln2_g = Mat::Ones(1, d);
  ln2_b = Mat::Zero(1, d);
}

void AttentionBlockParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  f(prefix + ".wq", wq);
  f(prefix + ".wk", wk);
  f(prefix + ".wv", wv);
  f(prefix + ".wo", wo);
  f(prefix + ".ln1_g", ln1_g);
  f(prefix + ".ln1_b", ln1_b);
  f(prefix + ".w1", w1);
  f(prefix + ".b1", b1);
  f(prefix + ".w2", w2);
  f(prefix + ".b2", b2);
  f(prefix + ".ln2_g", ln2_g);
  f(prefix + ".ln2_b", ln2_b);
}

void EncoderParams::init(EncoderKind kind_, int d_, int n_positions_, int n_blocks,
                         int n_heads_, int d_ff, double dropout_, Rng& rng) {
  CDSR_CHECK(d_ > 0 && n_positions_ > 0, "encoder dimensions must be positive");
  kind = kind_;
  d = d_;
  n_heads = n_heads_;
  n_positions = n_positions_;
  dropout = dropout_;
  positions = trunc_normal(n_positions_, d_, 0.02, rng);
  blocks.clear();
  if (kind == EncoderKind::Recurrent) {
    gru.init(d_, d_, rng);
  } else {
    CDSR_CHECK(n_heads_ > 0 && d_ % n_heads_ == 0,
               "state width must divide evenly across heads");
    blocks.resize(static_cast<size_t>(n_blocks));
    for (auto& blk : blocks) blk.init(d_, d_ff, rng);
  }
}

void EncoderParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  f(prefix + ".pos", positions);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].visit(prefix + ".blk" + std::to_string(i), f);
  if (kind == EncoderKind::Recurrent) gru.visit(prefix + ".gru", f);
}

SeqBatch make_batch(const std::vector<PaddedSequence>& seqs) {
  CDSR_CHECK(!seqs.empty(), "cannot batch zero sequences");
  SeqBatch out;
  out.b = static_cast<int>(seqs.size());
  out.n = seqs.front().n;
  const size_t bn = static_cast<size_t>(out.b) * static_cast<size_t>(out.n);
  out.mixed_rows.assign(bn, -1);
  out.x_rows.assign(bn, -1);
  out.y_rows.assign(bn, -1);
  out.pos_mixed.assign(bn, -1);
  out.pos_x.assign(bn, -1);
  out.pos_y.assign(bn, -1);
  out.dom.assign(bn, Domain::X);
  out.x_local.assign(bn, -1);
  out.y_local.assign(bn, -1);
  for (int bi = 0; bi < out.b; ++bi) {
    const PaddedSequence& s = seqs[static_cast<size_t>(bi)];
    CDSR_CHECK(s.n == out.n, "all windows in a batch must share one length");
    for (int t = 0; t < out.n; ++t) {
      const size_t flat = static_cast<size_t>(bi) * out.n + t;
      if (s.global[static_cast<size_t>(t)] < 0) continue;
      out.mixed_rows[flat] = s.global[static_cast<size_t>(t)];
      out.pos_mixed[flat] = t;
      out.dom[flat] = s.dom[static_cast<size_t>(t)];
      if (s.view_x[static_cast<size_t>(t)] >= 0) {
        out.x_rows[flat] = s.view_x[static_cast<size_t>(t)];
        out.pos_x[flat] = t;
        out.x_local[flat] = s.view_x[static_cast<size_t>(t)];
      }
      if (s.view_y[static_cast<size_t>(t)] >= 0) {
        out.y_rows[flat] = s.view_y[static_cast<size_t>(t)];
        out.pos_y[flat] = t;
        out.y_local[flat] = s.view_y[static_cast<size_t>(t)];
      }
    }
  }
  return out;
}

DropoutMasks draw_dropout(int bn, int d, int n_blocks, double rate, Rng& rng) {
  DropoutMasks m;
  if (rate <= 0.0) return m;
  CDSR_CHECK(rate < 1.0, "dropout rate must stay below 1");
  const double scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw = [&](Mat& dst) {
    dst = Mat(bn, d);
    for (int i = 0; i < bn; ++i)
      for (int j = 0; j < d; ++j) dst(i, j) = unif(rng) < rate ? 0.0 : scale;
  };
  draw(m.embed);
  m.attn.resize(static_cast<size_t>(n_blocks));
  m.ffn.resize(static_cast<size_t>(n_blocks));
  for (int i = 0; i < n_blocks; ++i) {
    draw(m.attn[static_cast<size_t>(i)]);
    draw(m.ffn[static_cast<size_t>(i)]);
  }
  return m;
}

ad::Var embed_view_t(ad::Tape& t, const nn::Binder& b, const EncoderParams& p,
                     ad::Var table, const SeqBatch& batch, View view) {
  ad::Var items = t.gather_rows(table, batch.rows(view));
  ad::Var pos = t.gather_rows(b[p.positions], batch.pos(view));
  return t.add(items, pos);
}

namespace {

ad::Var maybe_drop(ad::Tape& t, ad::Var x, const Mat& mask) {
  if (mask.size() == 0) return x;
  return t.mul(x, t.constant(mask));
}

// One pre-norm residual block: x + Drop(SelfAttn(LN(x))) then
// x + Drop(FFN(LN(x))). Attention is causal and only the view's non-pad
// positions may serve as keys; a query with no admissible key yields zeros.
ad::Var attention_block_t(ad::Tape& t, const nn::Binder& b, const AttentionBlockParams& blk,
                          ad::Var x, const SeqBatch& batch,
                          const std::vector<int32_t>& view_rows, int n_heads,
                          const Mat* attn_mask, const Mat* ffn_mask) {
  const int d = static_cast<int>(t.val(x).cols());
  const int dh = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ad::Var a_in = t.layer_norm(x, b[blk.ln1_g], b[blk.ln1_b], 1e-5);
  ad::Var q = t.matmul(a_in, b[blk.wq]);
  ad::Var k = t.matmul(a_in, b[blk.wk]);
  ad::Var v = t.matmul(a_in, b[blk.wv]);

  std::vector<ad::Var> per_seq;
  per_seq.reserve(static_cast<size_t>(batch.b));
  for (int bi = 0; bi < batch.b; ++bi) {
    Eigen::ArrayXXd allow = Eigen::ArrayXXd::Zero(batch.n, batch.n);
    for (int qt = 0; qt < batch.n; ++qt)
      for (int kt = 0; kt <= qt; ++kt)
        if (view_rows[static_cast<size_t>(bi) * batch.n + kt] >= 0) allow(qt, kt) = 1.0;
    ad::Var qb = t.slice_rows(q, bi * batch.n, batch.n);
    ad::Var kb = t.slice_rows(k, bi * batch.n, batch.n);
    ad::Var vb = t.slice_rows(v, bi * batch.n, batch.n);
    std::vector<ad::Var> heads;
    heads.reserve(static_cast<size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
      ad::Var qh = t.slice_cols(qb, h * dh, dh);
      ad::Var kh = t.slice_cols(kb, h * dh, dh);
      ad::Var vh = t.slice_cols(vb, h * dh, dh);
      ad::Var scores = t.scale(t.matmul_nt(qh, kh), scale);
      ad::Var probs = t.masked_softmax(scores, allow);
      heads.push_back(t.matmul(probs, vh));
    }
    per_seq.push_back(n_heads == 1 ? heads.front() : t.concat_cols(heads));
  }
  ad::Var attn = batch.b == 1 ? per_seq.front() : t.concat_rows(per_seq);
  ad::Var proj = t.matmul(attn, b[blk.wo]);
  if (attn_mask != nullptr) proj = maybe_drop(t, proj, *attn_mask);
  x = t.add(x, proj);

  ad::Var f_in = t.layer_norm(x, b[blk.ln2_g], b[blk.ln2_b], 1e-5);
  ad::Var hidden = t.relu(t.add_rowvec(t.matmul(f_in, b[blk.w1]), b[blk.b1]));
  ad::Var ffn = t.add_rowvec(t.matmul(hidden, b[blk.w2]), b[blk.b2]);
  if (ffn_mask != nullptr) ffn = maybe_drop(t, ffn, *ffn_mask);
  return t.add(x, ffn);
}

// Step-wise recurrence over the flattened layout. Pads leave the state
// untouched; the recorded state at slot (b, t) is the state after consuming
// position t.
ad::Var recurrent_forward_t(ad::Tape& t, const nn::Binder& b, const EncoderParams& p,
                            ad::Var inputs, const SeqBatch& batch,
                            const std::vector<int32_t>& view_rows) {
  const int B = batch.b;
  const int N = batch.n;
  ad::Var h = t.constant(Mat::Zero(B, p.d));
  std::vector<ad::Var> stepped;  // t-major: N chunks of B rows
  stepped.reserve(static_cast<size_t>(N));
  for (int step = 0; step < N; ++step) {
    std::vector<int32_t> take(static_cast<size_t>(B));
    std::vector<char> active(static_cast<size_t>(B));
    bool any = false;
    for (int bi = 0; bi < B; ++bi) {
      const size_t flat = static_cast<size_t>(bi) * N + step;
      const bool on = view_rows[flat] >= 0;
      take[static_cast<size_t>(bi)] = static_cast<int32_t>(flat);
      active[static_cast<size_t>(bi)] = on ? 1 : 0;
      any = any || on;
    }
    if (any) {
      ad::Var xt = t.gather_rows(inputs, take);
      ad::Var next = nn::gru_step(t, b, p.gru, xt, h);
      h = t.select_rows(next, h, active);
    }
    stepped.push_back(h);
  }
  ad::Var t_major = N == 1 ? stepped.front() : t.concat_rows(stepped);
  std::vector<int32_t> perm(static_cast<size_t>(B) * static_cast<size_t>(N));
  for (int bi = 0; bi < B; ++bi)
    for (int step = 0; step < N; ++step)
      perm[static_cast<size_t>(bi) * N + step] = static_cast<int32_t>(step * B + bi);
  return t.gather_rows(t_major, perm);
}

}  // namespace

ad::Var encoder_forward_t(ad::Tape& t, const nn::Binder& b, const EncoderParams& p,
                          ad::Var inputs, const SeqBatch& batch, View view,
                          const DropoutMasks* drop) {
  const std::vector<int32_t>& view_rows = batch.rows(view);
  ad::Var x = inputs;
  if (drop != nullptr && drop->embed.size() != 0) x = maybe_drop(t, x, drop->embed);
  if (p.kind == EncoderKind::Recurrent) return recurrent_forward_t(t, b, p, x, batch, view_rows);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    const Mat* am = (drop != nullptr && i < drop->attn.size()) ? &drop->attn[i] : nullptr;
    const Mat* fm = (drop != nullptr && i < drop->ffn.size()) ? &drop->ffn[i] : nullptr;
    x = attention_block_t(t, b, p.blocks[i], x, batch, view_rows, p.n_heads, am, fm);
  }
  return x;
}

UserStates user_states_t(ad::Tape& t, const nn::Binder& b, const EncoderParams& p,
                         const SeqBatch& batch, ad::Var table_mixed, ad::Var table_x,
                         ad::Var table_y, const DropoutMasks* drop_mixed,
                         const DropoutMasks* drop_x, const DropoutMasks* drop_y) {
  UserStates out;
  ad::Var em = embed_view_t(t, b, p, table_mixed, batch, View::Mixed);
  ad::Var ex = embed_view_t(t, b, p, table_x, batch, View::X);
  ad::Var ey = embed_view_t(t, b, p, table_y, batch, View::Y);
  out.mixed = encoder_forward_t(t, b, p, em, batch, View::Mixed, drop_mixed);
  out.x = encoder_forward_t(t, b, p, ex, batch, View::X, drop_x);
  out.y = encoder_forward_t(t, b, p, ey, batch, View::Y, drop_y);
  return out;
}

}  // namespace cdsr
