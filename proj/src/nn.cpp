#include "cdsr/nn.hpp"

#include <cmath>

namespace cdsr::nn {

Mat uniform_fanin(int rows, int cols, int fan_in, Rng& rng) {
  CDSR_CHECK(fan_in > 0, "uniform_fanin: fan_in must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

void GruParams::init(int d_in, int d_h, Rng& rng) {
  w_ir = uniform_fanin(d_in, d_h, d_in, rng);
  w_iz = uniform_fanin(d_in, d_h, d_in, rng);
  w_in = uniform_fanin(d_in, d_h, d_in, rng);
  w_hr = uniform_fanin(d_h, d_h, d_h, rng);
  w_hz = uniform_fanin(d_h, d_h, d_h, rng);
  w_hn = uniform_fanin(d_h, d_h, d_h, rng);
  for (Mat* b : {&b_ir, &b_iz, &b_in, &b_hr, &b_hz, &b_hn}) *b = Mat::Zero(1, d_h);
}

void GruParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".w_ir", w_ir);
  f(prefix + ".w_iz", w_iz);
  f(prefix + ".w_in", w_in);
  f(prefix + ".w_hr", w_hr);
  f(prefix + ".w_hz", w_hz);
  f(prefix + ".w_hn", w_hn);
  f(prefix + ".b_ir", b_ir);
  f(prefix + ".b_iz", b_iz);
  f(prefix + ".b_in", b_in);
  f(prefix + ".b_hr", b_hr);
  f(prefix + ".b_hz", b_hz);
  f(prefix + ".b_hn", b_hn);
}

void MlpParams::init(int d_in, int d_hidden, int d_out, Rng& rng) {
  w1 = uniform_fanin(d_in, d_hidden, d_in, rng);
  b1 = Mat::Zero(1, d_hidden);
  w2 = uniform_fanin(d_hidden, d_out, d_hidden, rng);
  b2 = Mat::Zero(1, d_out);
}

void MlpParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".w1", w1);
  f(prefix + ".b1", b1);
  f(prefix + ".w2", w2);
  f(prefix + ".b2", b2);
}

ad::Var gru_step(ad::Tape& t, const Binder& b, const GruParams& p, ad::Var x, ad::Var h) {
  auto lin = [&](ad::Var in, const Mat& w, const Mat& bias) {
    return t.add_rowvec(t.matmul(in, b[w]), b[bias]);
  };
  ad::Var r = t.sigmoid(t.add(lin(x, p.w_ir, p.b_ir), lin(h, p.w_hr, p.b_hr)));
  ad::Var z = t.sigmoid(t.add(lin(x, p.w_iz, p.b_iz), lin(h, p.w_hz, p.b_hz)));
  ad::Var n = t.tanh_fn(t.add(lin(x, p.w_in, p.b_in), t.mul(r, lin(h, p.w_hn, p.b_hn))));
  return t.add(t.sub(n, t.mul(z, n)), t.mul(z, h));
}

Mat gru_step_plain(const GruParams& p, const Mat& x, const Mat& h) {
  auto sig = [](const Mat& m) {
    return m.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); }).eval();
  };
  auto rowplus = [](Mat m, const Mat& b) {
    m.rowwise() += b.row(0);
    return m;
  };
  Mat r = sig(rowplus(x * p.w_ir, p.b_ir) + rowplus(h * p.w_hr, p.b_hr));
  Mat z = sig(rowplus(x * p.w_iz, p.b_iz) + rowplus(h * p.w_hz, p.b_hz));
  Mat n = (rowplus(x * p.w_in, p.b_in) +
           r.cwiseProduct(rowplus(h * p.w_hn, p.b_hn)))
              .array()
              .tanh();
  return (Mat::Ones(z.rows(), z.cols()) - z).cwiseProduct(n) + z.cwiseProduct(h);
}

ad::Var mlp_apply(ad::Tape& t, const Binder& b, const MlpParams& p, ad::Var x) {
  ad::Var hidden = t.relu(t.add_rowvec(t.matmul(x, b[p.w1]), b[p.b1]));
  return t.add_rowvec(t.matmul(hidden, b[p.w2]), b[p.b2]);
}

Mat mlp_apply_plain(const MlpParams& p, const Mat& x) {
  Mat hidden = (x * p.w1);
  hidden.rowwise() += p.b1.row(0);
  hidden = hidden.cwiseMax(0.0);
  Mat out = hidden * p.w2;
  out.rowwise() += p.b2.row(0);
  return out;
}

}  // namespace cdsr::nn
