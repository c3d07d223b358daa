#pragma once

#include "cdsr/autodiff.hpp"
#include "cdsr/common.hpp"
#include "cdsr/corpus.hpp"
#include "cdsr/nn.hpp"

#include <string>
#include <vector>

namespace cdsr {

enum class EncoderKind { GnnAtt, AttentionOnly, Recurrent };

std::string encoder_kind_name(EncoderKind k);
EncoderKind encoder_kind_parse(const std::string& name);

struct AttentionBlockParams {
  Mat wq, wk, wv, wo;  // d x d projections
  Mat ln1_g, ln1_b;    // pre-attention norm
  Mat w1, b1, w2, b2;  // position-wise feed-forward d -> d_ff -> d
  Mat ln2_g, ln2_b;    // pre-feed-forward norm
  void init(int d, int d_ff, Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

struct EncoderParams {
  EncoderKind kind = EncoderKind::GnnAtt;
  int d = 0;
  int n_heads = 2;
  int n_positions = 0;
  double dropout = 0.2;
  Mat positions;  // n_positions x d, added at non-pad positions
  std::vector<AttentionBlockParams> blocks;  // attention kinds
  nn::GruParams gru;                         // recurrent kind
  void init(EncoderKind kind, int d, int n_positions, int n_blocks, int n_heads,
            int d_ff, double dropout, Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

enum class View : uint8_t { Mixed, X, Y };

// Flattened index plan for a batch of left-padded windows: row b*n + t.
// -1 marks pads. View rows index the view's own table; position rows index
// the positional table by mixed position t.
struct SeqBatch {
  int b = 0;
  int n = 0;
  std::vector<int32_t> mixed_rows, x_rows, y_rows;
  std::vector<int32_t> pos_mixed, pos_x, pos_y;
  std::vector<Domain> dom;        // per flat slot, meaningful where mixed_rows != -1
  std::vector<int32_t> x_local, y_local;  // local target ids (== view rows)

  const std::vector<int32_t>& rows(View v) const {
    return v == View::Mixed ? mixed_rows : (v == View::X ? x_rows : y_rows);
  }
  const std::vector<int32_t>& pos(View v) const {
    return v == View::Mixed ? pos_mixed : (v == View::X ? pos_x : pos_y);
  }
};

SeqBatch make_batch(const std::vector<PaddedSequence>& seqs);

// Pre-scaled inverted-dropout masks; empty matrices mean "no dropout".
struct DropoutMasks {
  Mat embed;              // (b*n) x d
  std::vector<Mat> attn;  // per block
  std::vector<Mat> ffn;   // per block
};
DropoutMasks draw_dropout(int bn, int d, int n_blocks, double rate, Rng& rng);

// Item rows gathered from table (-1 -> zero vector) plus positional rows
// gathered the same way; returns (b*n) x d.
ad::Var embed_view_t(ad::Tape& t, const nn::Binder& b, const EncoderParams& p,
                     ad::Var table, const SeqBatch& batch, View view);

// Causal per-position states; keys are restricted to the view's non-pad
// positions. (b*n) x d in, (b*n) x d out.
ad::Var encoder_forward_t(ad::Tape& t, const nn::Binder& b, const EncoderParams& p,
                          ad::Var inputs, const SeqBatch& batch, View view,
                          const DropoutMasks* drop);

struct UserStates {
  ad::Var mixed, x, y;  // (b*n) x d each
};

// Three forward passes over one shared parameter set.
UserStates user_states_t(ad::Tape& t, const nn::Binder& b, const EncoderParams& p,
                         const SeqBatch& batch, ad::Var table_mixed, ad::Var table_x,
                         ad::Var table_y, const DropoutMasks* drop_mixed,
                         const DropoutMasks* drop_x, const DropoutMasks* drop_y);

}  // namespace cdsr
