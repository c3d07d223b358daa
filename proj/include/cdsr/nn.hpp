#pragma once

#include "cdsr/autodiff.hpp"
#include "cdsr/common.hpp"

#include <functional>
#include <optional>
#include <string>
#include <unordered_map>

namespace cdsr::nn {

using ParamVisitor = std::function<void(const std::string&, Mat&)>;

// entries ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), fixed traversal order
Mat uniform_fanin(int rows, int cols, int fan_in, Rng& rng);

// Gated recurrent unit, reset/update/candidate convention:
//   r = sig(x Wir + bir + h Whr + bhr)
//   z = sig(x Wiz + biz + h Whz + bhz)
//   n = tanh(x Win + bin + r .* (h Whn + bhn))
//   h' = (1 - z) .* n + z .* h
struct GruParams {
  Mat w_ir, w_iz, w_in;                   // d_in x d_h
  Mat w_hr, w_hz, w_hn;                   // d_h x d_h
  Mat b_ir, b_iz, b_in, b_hr, b_hz, b_hn; // 1 x d_h
  void init(int d_in, int d_h, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
  int hidden() const { return static_cast<int>(w_hr.rows()); }
};

// two affine layers with a ReLU between
struct MlpParams {
  Mat w1, b1, w2, b2;
  void init(int d_in, int d_hidden, int d_out, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& f);
};

// Tape leaves for parameter records, addressed by the matrix they shadow.
// Matrices are bound lazily on first access, so only parameters the forward
// pass actually touches appear on the tape. trainable=false registers
// constants (evaluation mode).
class Binder {
 public:
  Binder(ad::Tape& tape, bool trainable = true) : tape_(&tape), trainable_(trainable) {}

  ad::Var bind(const Mat& m) const {
    auto it = vars_.find(&m);
    if (it != vars_.end()) return it->second;
    ad::Var v = trainable_ ? tape_->leaf(m) : tape_->constant(m);
    vars_.emplace(&m, v);
    return v;
  }
  // Route an externally built tape variable in place of the stored matrix
  // (finite-difference harnesses perturb copies this way).
  void bind_as(const Mat& m, ad::Var v) { vars_[&m] = v; }
  template <class P>
  void bind_all(const std::string& prefix, P& params) {
    params.visit(prefix, [this](const std::string&, Mat& m) { bind(m); });
  }
  ad::Var operator[](const Mat& m) const { return bind(m); }
  // The Var for a matrix if the forward pass touched it, else nullopt.
  std::optional<ad::Var> bound(const Mat& m) const {
    auto it = vars_.find(&m);
    if (it == vars_.end()) return std::nullopt;
    return it->second;
  }
  ad::Tape& tape() const { return *tape_; }

 private:
  ad::Tape* tape_;
  bool trainable_;
  mutable std::unordered_map<const Mat*, ad::Var> vars_;
};

// one batched step over rows of x/h
ad::Var gru_step(ad::Tape& t, const Binder& b, const GruParams& p, ad::Var x, ad::Var h);
Mat gru_step_plain(const GruParams& p, const Mat& x, const Mat& h);

ad::Var mlp_apply(ad::Tape& t, const Binder& b, const MlpParams& p, ad::Var x);
Mat mlp_apply_plain(const MlpParams& p, const Mat& x);

}  // namespace cdsr::nn
