#pragma once

#include "cdsr/common.hpp"

#include <Eigen/SparseCore>

#include <functional>
#include <vector>

namespace cdsr::ad {

using SpMat = Eigen::SparseMatrix<double>;

// Handle into a Tape.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense double matrices. Vectors are d x 1 matrices,
// scalars 1 x 1. Nodes are created in topological order, so backward() is a
// single reverse sweep. Sparse adjacency operands are caller-owned constants
// and must outlive the tape.
class Tape {
 public:
  Var leaf(const Mat& value);     // gradient-tracked input
  Var constant(const Mat& value); // no gradient

  const Mat& val(Var v) const;
  const Mat& grad(Var v) const;   // valid after backward(); zero if untouched

  // arithmetic
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);          // elementwise
  Var scale(Var a, double s);
  Var add_rowvec(Var a, Var row); // broadcast 1 x d over rows of a
  Var matmul(Var a, Var b);
  Var matmul_tn(Var a, Var b);    // a^T * b
  Var matmul_nt(Var a, Var b);    // a * b^T
  Var spmm(const SpMat* a, Var x);
  Var dot_all(Var a, Var b);      // sum(a .* b) -> 1 x 1
  Var sum_all(Var a);
  Var div_by_scalar(Var a, Var s);

  // shape / selection
  Var gather_rows(Var a, std::vector<int32_t> rows); // row -1 reads as zeros
  Var slice_rows(Var a, int r0, int n);
  Var slice_cols(Var a, int c0, int n);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var mask_rows(Var a, std::vector<char> keep);          // zero dropped rows
  Var select_rows(Var a, Var b, std::vector<char> take_a);

  // nonlinearities
  Var sigmoid(Var a);
  Var tanh_fn(Var a);
  Var relu(Var a);
  Var softplus(Var a);

  // structured ops
  Var layer_norm(Var x, Var gamma, Var beta, double eps);
  Var rownormalize(Var x, double guard);                 // rows to unit L2
  Var masked_softmax(Var scores, const Eigen::ArrayXXd& allow); // all-masked row -> zeros
  Var infonce_from_sim(Var sim, double tau);             // sum_i -log softmax_j(S_ij/tau)[i]
  Var ce_sum(Var logits, std::vector<int32_t> targets);  // sum_i -log softmax(row_i)[y_i]

  void backward(Var root);  // root must be 1 x 1
  void clear();
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;                   // allocated lazily during backward
    bool requires_grad = false;
    std::function<void()> back; // empty for leaves/constants
  };

  std::vector<Node> nodes_;

  Var push(Mat val, bool requires_grad, std::function<void()> back);
  bool rg(Var v) const { return nodes_[v.id].requires_grad; }
  const Mat& v(Var x) const { return nodes_[x.id].val; }
  // accumulation target; zero-initialised on first touch
  Mat& g(int32_t id);
  bool touched(int32_t id) const { return nodes_[id].grad.size() > 0; }
};

}  // namespace cdsr::ad
