#include "cdsr/autodiff.hpp"

#include <cmath>
#include <utility>

namespace cdsr::ad {

Var Tape::push(Mat val, bool requires_grad, std::function<void()> back) {
  Node n;
  n.val = std::move(val);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(const Mat& value) { return push(value, true, nullptr); }
Var Tape::constant(const Mat& value) { return push(value, false, nullptr); }

const Mat& Tape::val(Var v) const { return nodes_.at(v.id).val; }

const Mat& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  static const Mat empty;
  if (n.grad.size() == 0) {
    // untouched by backward: expose a zero of the right shape lazily
    const_cast<Node&>(n).grad = Mat::Zero(n.val.rows(), n.val.cols());
  }
  (void)empty;
  return n.grad;
}

Mat& Tape::g(int32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

void Tape::clear() { nodes_.clear(); }

void Tape::backward(Var root) {
  CDSR_CHECK(root.valid() && v(root).rows() == 1 && v(root).cols() == 1,
             "backward: root must be a 1x1 scalar");
  g(root.id)(0, 0) = 1.0;
  for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.back || !touched(i)) continue;
    n.back();
  }
}

// ---------------------------------------------------------------------------
// arithmetic

Var Tape::add(Var a, Var b) {
  CDSR_CHECK(v(a).rows() == v(b).rows() && v(a).cols() == v(b).cols(),
             "add: shape mismatch");
  Var out = push(v(a) + v(b), rg(a) || rg(b), nullptr);
  nodes_[out.id].back = [this, a, b, out] {
    const Mat& go = g(out.id);
    if (rg(a)) g(a.id) += go;
    if (rg(b)) g(b.id) += go;
  };
  return out;
}

Var Tape::sub(Var a, Var b) {
  CDSR_CHECK(v(a).rows() == v(b).rows() && v(a).cols() == v(b).cols(),
             "sub: shape mismatch");
  Var out = push(v(a) - v(b), rg(a) || rg(b), nullptr);
  nodes_[out.id].back = [this, a, b, out] {
    const Mat& go = g(out.id);
    if (rg(a)) g(a.id) += go;
    if (rg(b)) g(b.id) -= go;
  };
  return out;
}

Var Tape::mul(Var a, Var b) {
  CDSR_CHECK(v(a).rows() == v(b).rows() && v(a).cols() == v(b).cols(),
             "mul: shape mismatch");
  Var out = push(v(a).cwiseProduct(v(b)), rg(a) || rg(b), nullptr);
  nodes_[out.id].back = [this, a, b, out] {
    const Mat& go = g(out.id);
    if (rg(a)) g(a.id) += go.cwiseProduct(v(b));
    if (rg(b)) g(b.id) += go.cwiseProduct(v(a));
  };
  return out;
}

Var Tape::scale(Var a, double s) {
  Var out = push(v(a) * s, rg(a), nullptr);
  nodes_[out.id].back = [this, a, out, s] {
    if (rg(a)) g(a.id) += g(out.id) * s;
  };
  return out;
}

Var Tape::add_rowvec(Var a, Var row) {
  CDSR_CHECK(v(row).rows() == 1 && v(row).cols() == v(a).cols(),
             "add_rowvec: row must be 1 x cols(a)");
  Mat out_v = v(a);
  out_v.rowwise() += v(row).row(0);
  Var out = push(std::move(out_v), rg(a) || rg(row), nullptr);
  nodes_[out.id].back = [this, a, row, out] {
    const Mat& go = g(out.id);
    if (rg(a)) g(a.id) += go;
    if (rg(row)) g(row.id) += go.colwise().sum();
  };
  return out;
}

Var Tape::matmul(Var a, Var b) {
  CDSR_CHECK(v(a).cols() == v(b).rows(), "matmul: inner dim mismatch");
  Var out = push(v(a) * v(b), rg(a) || rg(b), nullptr);
  nodes_[out.id].back = [this, a, b, out] {
    const Mat& go = g(out.id);
    if (rg(a)) g(a.id) += go * v(b).transpose();
    if (rg(b)) g(b.id) += v(a).transpose() * go;
  };
  return out;
}

Var Tape::matmul_tn(Var a, Var b) {
  CDSR_CHECK(v(a).rows() == v(b).rows(), "matmul_tn: inner dim mismatch");
  Var out = push(v(a).transpose() * v(b), rg(a) || rg(b), nullptr);
  nodes_[out.id].back = [this, a, b, out] {
    const Mat& go = g(out.id);
    if (rg(a)) g(a.id) += v(b) * go.transpose();
    if (rg(b)) g(b.id) += v(a) * go;
  };
  return out;
}

Var Tape::matmul_nt(Var a, Var b) {
  CDSR_CHECK(v(a).cols() == v(b).cols(), "matmul_nt: inner dim mismatch");
  Var out = push(v(a) * v(b).transpose(), rg(a) || rg(b), nullptr);
  nodes_[out.id].back = [this, a, b, out] {
    const Mat& go = g(out.id);
    if (rg(a)) g(a.id) += go * v(b);
    if (rg(b)) g(b.id) += go.transpose() * v(a);
  };
  return out;
}

Var Tape::spmm(const SpMat* a, Var x) {
  CDSR_CHECK(a != nullptr && a->cols() == v(x).rows(),
             "spmm: inner dim mismatch");
  Var out = push(*a * v(x), rg(x), nullptr);
  nodes_[out.id].back = [this, a, x, out] {
    if (rg(x)) g(x.id) += a->transpose() * g(out.id);
  };
  return out;
}

Var Tape::dot_all(Var a, Var b) {
  CDSR_CHECK(v(a).rows() == v(b).rows() && v(a).cols() == v(b).cols(),
             "dot_all: shape mismatch");
  Mat out_v(1, 1);
  out_v(0, 0) = v(a).cwiseProduct(v(b)).sum();
  Var out = push(std::move(out_v), rg(a) || rg(b), nullptr);
  nodes_[out.id].back = [this, a, b, out] {
    double go = g(out.id)(0, 0);
    if (rg(a)) g(a.id) += go * v(b);
    if (rg(b)) g(b.id) += go * v(a);
  };
  return out;
}

Var Tape::sum_all(Var a) {
  Mat out_v(1, 1);
  out_v(0, 0) = v(a).sum();
  Var out = push(std::move(out_v), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out] {
    if (rg(a)) g(a.id).array() += g(out.id)(0, 0);
  };
  return out;
}

Var Tape::div_by_scalar(Var a, Var s) {
  CDSR_CHECK(v(s).rows() == 1 && v(s).cols() == 1, "div_by_scalar: s not 1x1");
  double sv = v(s)(0, 0);
  Var out = push(v(a) / sv, rg(a) || rg(s), nullptr);
  nodes_[out.id].back = [this, a, s, out, sv] {
    const Mat& go = g(out.id);
    if (rg(a)) g(a.id) += go / sv;
    if (rg(s)) g(s.id)(0, 0) += -(go.cwiseProduct(v(a))).sum() / (sv * sv);
  };
  return out;
}

// ---------------------------------------------------------------------------
// shape / selection

Var Tape::gather_rows(Var a, std::vector<int32_t> rows) {
  const Mat& av = v(a);
  Mat out_v = Mat::Zero(static_cast<int>(rows.size()), av.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    CDSR_CHECK(rows[i] < av.rows(), "gather_rows: index out of range");
    if (rows[i] >= 0) out_v.row(static_cast<int>(i)) = av.row(rows[i]);
  }
  Var out = push(std::move(out_v), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out, rows = std::move(rows)] {
    if (!rg(a)) return;
    const Mat& go = g(out.id);
    Mat& ga = g(a.id);
    for (size_t i = 0; i < rows.size(); ++i)
      if (rows[i] >= 0) ga.row(rows[i]) += go.row(static_cast<int>(i));
  };
  return out;
}

Var Tape::slice_rows(Var a, int r0, int n) {
  CDSR_CHECK(r0 >= 0 && n >= 0 && r0 + n <= v(a).rows(),
             "slice_rows: range out of bounds");
  Var out = push(v(a).middleRows(r0, n), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out, r0, n] {
    if (rg(a)) g(a.id).middleRows(r0, n) += g(out.id);
  };
  return out;
}

Var Tape::slice_cols(Var a, int c0, int n) {
  CDSR_CHECK(c0 >= 0 && n >= 0 && c0 + n <= v(a).cols(),
             "slice_cols: range out of bounds");
  Var out = push(v(a).middleCols(c0, n), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out, c0, n] {
    if (rg(a)) g(a.id).middleCols(c0, n) += g(out.id);
  };
  return out;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  CDSR_CHECK(!parts.empty(), "concat_rows: empty");
  int total = 0;
  int cols = v(parts[0]).cols();
  bool any_rg = false;
  for (Var p : parts) {
    CDSR_CHECK(v(p).cols() == cols, "concat_rows: column mismatch");
    total += static_cast<int>(v(p).rows());
    any_rg = any_rg || rg(p);
  }
  Mat out_v(total, cols);
  int r = 0;
  for (Var p : parts) {
    out_v.middleRows(r, v(p).rows()) = v(p);
    r += static_cast<int>(v(p).rows());
  }
  Var out = push(std::move(out_v), any_rg, nullptr);
  nodes_[out.id].back = [this, out, parts] {
    const Mat& go = g(out.id);
    int r = 0;
    for (Var p : parts) {
      int n = static_cast<int>(v(p).rows());
      if (rg(p)) g(p.id) += go.middleRows(r, n);
      r += n;
    }
  };
  return out;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  CDSR_CHECK(!parts.empty(), "concat_cols: empty");
  int total = 0;
  int rows = v(parts[0]).rows();
  bool any_rg = false;
  for (Var p : parts) {
    CDSR_CHECK(v(p).rows() == rows, "concat_cols: row mismatch");
    total += static_cast<int>(v(p).cols());
    any_rg = any_rg || rg(p);
  }
  Mat out_v(rows, total);
  int c = 0;
  for (Var p : parts) {
    out_v.middleCols(c, v(p).cols()) = v(p);
    c += static_cast<int>(v(p).cols());
  }
  Var out = push(std::move(out_v), any_rg, nullptr);
  nodes_[out.id].back = [this, out, parts] {
    const Mat& go = g(out.id);
    int c = 0;
    for (Var p : parts) {
      int n = static_cast<int>(v(p).cols());
      if (rg(p)) g(p.id) += go.middleCols(c, n);
      c += n;
    }
  };
  return out;
}

Var Tape::mask_rows(Var a, std::vector<char> keep) {
  CDSR_CHECK(static_cast<int>(keep.size()) == v(a).rows(),
             "mask_rows: mask size mismatch");
  Mat out_v = v(a);
  for (size_t i = 0; i < keep.size(); ++i)
    if (!keep[i]) out_v.row(static_cast<int>(i)).setZero();
  Var out = push(std::move(out_v), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out, keep = std::move(keep)] {
    if (!rg(a)) return;
    const Mat& go = g(out.id);
    Mat& ga = g(a.id);
    for (size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) ga.row(static_cast<int>(i)) += go.row(static_cast<int>(i));
  };
  return out;
}

Var Tape::select_rows(Var a, Var b, std::vector<char> take_a) {
  CDSR_CHECK(v(a).rows() == v(b).rows() && v(a).cols() == v(b).cols(),
             "select_rows: shape mismatch");
  CDSR_CHECK(static_cast<int>(take_a.size()) == v(a).rows(),
             "select_rows: mask size mismatch");
  Mat out_v = v(b);
  for (size_t i = 0; i < take_a.size(); ++i)
    if (take_a[i]) out_v.row(static_cast<int>(i)) = v(a).row(static_cast<int>(i));
  Var out = push(std::move(out_v), rg(a) || rg(b), nullptr);
  nodes_[out.id].back = [this, a, b, out, take_a = std::move(take_a)] {
    const Mat& go = g(out.id);
    for (size_t i = 0; i < take_a.size(); ++i) {
      int r = static_cast<int>(i);
      if (take_a[i]) {
        if (rg(a)) g(a.id).row(r) += go.row(r);
      } else {
        if (rg(b)) g(b.id).row(r) += go.row(r);
      }
    }
  };
  return out;
}

// ---------------------------------------------------------------------------
// nonlinearities

Var Tape::sigmoid(Var a) {
  Mat out_v = v(a).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  Var out = push(std::move(out_v), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out] {
    if (!rg(a)) return;
    const Mat& y = v(out);
    g(a.id) += g(out.id).cwiseProduct(y.cwiseProduct(Mat::Ones(y.rows(), y.cols()) - y));
  };
  return out;
}

Var Tape::tanh_fn(Var a) {
  Mat out_v = v(a).array().tanh();
  Var out = push(std::move(out_v), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out] {
    if (!rg(a)) return;
    const Mat& y = v(out);
    g(a.id) += g(out.id).cwiseProduct((1.0 - y.array().square()).matrix());
  };
  return out;
}

Var Tape::relu(Var a) {
  Mat out_v = v(a).cwiseMax(0.0);
  Var out = push(std::move(out_v), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out] {
    if (!rg(a)) return;
    const Mat& x = v(a);
    g(a.id) += g(out.id).cwiseProduct(
        x.unaryExpr([](double t) { return t > 0.0 ? 1.0 : 0.0; }));
  };
  return out;
}

Var Tape::softplus(Var a) {
  // stable log(1 + e^x)
  Mat out_v = v(a).unaryExpr([](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  Var out = push(std::move(out_v), rg(a), nullptr);
  nodes_[out.id].back = [this, a, out] {
    if (!rg(a)) return;
    const Mat& x = v(a);
    g(a.id) += g(out.id).cwiseProduct(
        x.unaryExpr([](double t) { return 1.0 / (1.0 + std::exp(-t)); }));
  };
  return out;
}

// ---------------------------------------------------------------------------
// structured ops

Var Tape::layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Mat& xv = v(x);
  const int d = static_cast<int>(xv.cols());
  CDSR_CHECK(v(gamma).rows() == 1 && v(gamma).cols() == d &&
                 v(beta).rows() == 1 && v(beta).cols() == d,
             "layer_norm: gamma/beta must be 1 x d");
  Mat xhat(xv.rows(), d);
  Vec inv_std(xv.rows());
  for (int i = 0; i < xv.rows(); ++i) {
    double mu = xv.row(i).mean();
    double var = (xv.row(i).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(i) = is;
    xhat.row(i) = (xv.row(i).array() - mu) * is;
  }
  Mat out_v = (xhat.array().rowwise() * v(gamma).row(0).array()).rowwise() +
              v(beta).row(0).array();
  Var out = push(std::move(out_v), rg(x) || rg(gamma) || rg(beta), nullptr);
  nodes_[out.id].back = [this, x, gamma, beta, out, xhat = std::move(xhat),
                         inv_std = std::move(inv_std), d] {
    const Mat& go = g(out.id);
    if (rg(beta)) g(beta.id) += go.colwise().sum();
    if (rg(gamma)) g(gamma.id) += go.cwiseProduct(xhat).colwise().sum();
    if (rg(x)) {
      Mat& gx = g(x.id);
      const auto gr = v(gamma).row(0).array();
      for (int i = 0; i < go.rows(); ++i) {
        Eigen::ArrayXd dxhat = go.row(i).array() * gr;
        double m1 = dxhat.mean();
        double m2 = (dxhat * xhat.row(i).array().transpose()).mean();
        gx.row(i) += (inv_std(i) *
                      (dxhat - m1 - xhat.row(i).array().transpose() * m2))
                         .matrix()
                         .transpose();
      }
    }
  };
  return out;
}

Var Tape::rownormalize(Var x, double guard) {
  const Mat& xv = v(x);
  Mat out_v(xv.rows(), xv.cols());
  Vec norms(xv.rows());
  for (int i = 0; i < xv.rows(); ++i) {
    double n = std::max(xv.row(i).norm(), guard);
    norms(i) = n;
    out_v.row(i) = xv.row(i) / n;
  }
  Var out = push(std::move(out_v), rg(x), nullptr);
  nodes_[out.id].back = [this, x, out, norms = std::move(norms), guard] {
    if (!rg(x)) return;
    const Mat& go = g(out.id);
    const Mat& y = v(out);
    Mat& gx = g(x.id);
    for (int i = 0; i < go.rows(); ++i) {
      if (v(x).row(i).norm() >= guard) {
        double yg = y.row(i).dot(go.row(i));
        gx.row(i) += (go.row(i) - y.row(i) * yg) / norms(i);
      } else {
        gx.row(i) += go.row(i) / guard;
      }
    }
  };
  return out;
}

Var Tape::masked_softmax(Var scores, const Eigen::ArrayXXd& allow) {
  const Mat& s = v(scores);
  CDSR_CHECK(allow.rows() == s.rows() && allow.cols() == s.cols(),
             "masked_softmax: mask shape mismatch");
  Mat out_v = Mat::Zero(s.rows(), s.cols());
  for (int i = 0; i < s.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < s.cols(); ++j)
      if (allow(i, j) > 0.5) mx = std::max(mx, s(i, j));
    if (!std::isfinite(mx)) continue;  // fully masked row stays zero
    double z = 0.0;
    for (int j = 0; j < s.cols(); ++j)
      if (allow(i, j) > 0.5) {
        out_v(i, j) = std::exp(s(i, j) - mx);
        z += out_v(i, j);
      }
    out_v.row(i) /= z;
  }
  Var out = push(std::move(out_v), rg(scores), nullptr);
  nodes_[out.id].back = [this, scores, out] {
    if (!rg(scores)) return;
    const Mat& p = v(out);
    const Mat& go = g(out.id);
    Mat& gs = g(scores.id);
    for (int i = 0; i < p.rows(); ++i) {
      double inner = p.row(i).dot(go.row(i));
      gs.row(i) += p.row(i).cwiseProduct(go.row(i).array().matrix() -
                                         Mat::Constant(1, p.cols(), inner));
    }
  };
  return out;
}

Var Tape::infonce_from_sim(Var sim, double tau) {
  const Mat& s = v(sim);
  CDSR_CHECK(s.rows() == s.cols(), "infonce_from_sim: matrix must be square");
  CDSR_CHECK(s.rows() >= 1, "infonce_from_sim: empty batch");
  const int m = static_cast<int>(s.rows());
  double loss = 0.0;
  Mat soft(m, m);
  for (int i = 0; i < m; ++i) {
    Eigen::ArrayXd row = s.row(i).array() / tau;
    double mx = row.maxCoeff();
    Eigen::ArrayXd e = (row - mx).exp();
    double z = e.sum();
    soft.row(i) = (e / z).matrix().transpose();
    loss += std::log(z) + mx - row(i);
  }
  Mat out_v(1, 1);
  out_v(0, 0) = loss;
  Var out = push(std::move(out_v), rg(sim), nullptr);
  nodes_[out.id].back = [this, sim, out, soft = std::move(soft), tau, m] {
    if (!rg(sim)) return;
    double go = g(out.id)(0, 0);
    Mat& gs = g(sim.id);
    for (int i = 0; i < m; ++i) {
      gs.row(i) += (go / tau) * soft.row(i);
      gs(i, i) -= go / tau;
    }
  };
  return out;
}

Var Tape::ce_sum(Var logits, std::vector<int32_t> targets) {
  const Mat& z = v(logits);
  CDSR_CHECK(static_cast<int>(targets.size()) == z.rows(),
             "ce_sum: one target per row required");
  const int m = static_cast<int>(z.rows());
  double loss = 0.0;
  Mat soft(z.rows(), z.cols());
  for (int i = 0; i < m; ++i) {
    CDSR_CHECK(targets[i] >= 0 && targets[i] < z.cols(),
               "ce_sum: target out of range");
    double mx = z.row(i).maxCoeff();
    Eigen::ArrayXd e = (z.row(i).array() - mx).exp();
    double lse = std::log(e.sum()) + mx;
    soft.row(i) = (e / e.sum()).matrix().transpose();
    loss += lse - z(i, targets[i]);
  }
  Mat out_v(1, 1);
  out_v(0, 0) = loss;
  Var out = push(std::move(out_v), rg(logits), nullptr);
  nodes_[out.id].back = [this, logits, out, soft = std::move(soft),
                         targets = std::move(targets)] {
    if (!rg(logits)) return;
    double go = g(out.id)(0, 0);
    Mat& gz = g(logits.id);
    gz += go * soft;
    for (size_t i = 0; i < targets.size(); ++i)
      gz(static_cast<int>(i), targets[i]) -= go;
  };
  return out;
}

}  // namespace cdsr::ad
