#include "cdsr/spectrum.hpp"

#include "cdsr/augment.hpp"

#include <Eigen/SVD>

namespace cdsr {

void FilterParams::init(int d, Rng& rng) {
  mu_x = randn(1, d, rng) * 0.01;
  mu_y = randn(1, d, rng) * 0.01;
}

void FilterParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  f(prefix + ".mu_x", mu_x);
  f(prefix + ".mu_y", mu_y);
}

Mat sample_filter(const Mat& mu, const Mat& eps) {
  CDSR_CHECK(mu.rows() == eps.rows() && mu.cols() == eps.cols(),
             "sample_filter: shape mismatch");
  return mu + eps;
}

FilterResult apply_rank1_filter(const Mat& e_hat, const Mat& v) {
  CDSR_CHECK(v.rows() == 1 && v.cols() == e_hat.cols(),
             "apply_rank1_filter: v must be 1 x d");
  Mat ev = e_hat * v.transpose();            // n x 1
  Mat vhat = e_hat.transpose() * ev;         // d x 1
  double vhat_norm = vhat.norm();
  if (vhat_norm < kDegenerateFilterTol * e_hat.norm())
    return {e_hat, true};
  Mat evhat = e_hat * vhat;                  // n x 1
  return {e_hat - evhat * vhat.transpose() / vhat.squaredNorm(), false};
}

ad::Var apply_rank1_filter_t(ad::Tape& t, ad::Var e_hat, ad::Var v, bool* degenerate) {
  const Mat& ev_ = t.val(e_hat);
  const Mat& vv_ = t.val(v);
  CDSR_CHECK(vv_.rows() == 1 && vv_.cols() == ev_.cols(),
             "apply_rank1_filter: v must be 1 x d");
  // decide degeneracy outside the tape; the branch is data-dependent
  Mat vhat_val = ev_.transpose() * (ev_ * vv_.transpose());
  if (vhat_val.norm() < kDegenerateFilterTol * ev_.norm()) {
    if (degenerate) *degenerate = true;
    return e_hat;
  }
  if (degenerate) *degenerate = false;
  ad::Var ev = t.matmul_nt(e_hat, v);        // n x 1
  ad::Var vhat = t.matmul_tn(e_hat, ev);     // d x 1
  ad::Var denom = t.dot_all(vhat, vhat);
  ad::Var evhat = t.matmul(e_hat, vhat);     // n x 1
  ad::Var outer = t.matmul_nt(evhat, vhat);  // n x d
  return t.sub(e_hat, t.div_by_scalar(outer, denom));
}

double inter_infonce(const Mat& ebar_x, const Mat& etil_x, const Mat& ebar_y,
                     const Mat& etil_y, double tau) {
  ad::Tape t;
  ad::Var loss = inter_infonce_t(t, t.constant(ebar_x), t.constant(etil_x),
                                 t.constant(ebar_y), t.constant(etil_y), tau);
  return t.val(loss)(0, 0);
}

ad::Var inter_infonce_t(ad::Tape& t, ad::Var ebar_x, ad::Var etil_x, ad::Var ebar_y,
                        ad::Var etil_y, double tau) {
  const auto mx = t.val(ebar_x).rows();
  const auto my = t.val(ebar_y).rows();
  CDSR_CHECK(mx > 0 || my > 0, "inter_infonce: both domains empty");
  ad::Var total = t.constant(Mat::Zero(1, 1));
  if (mx > 0) total = t.add(total, infonce_pairs_t(t, ebar_x, etil_x, tau));
  if (my > 0) total = t.add(total, infonce_pairs_t(t, ebar_y, etil_y, tau));
  return total;
}

Mat probe_spectrum(const Mat& e_hat, const ProbeSpec& spec) {
  const int rank_bound = static_cast<int>(std::min(e_hat.rows(), e_hat.cols()));
  CDSR_CHECK(spec.group_lo >= 1 && spec.group_lo <= spec.group_hi,
             "probe_spectrum: bad group range");
  CDSR_CHECK(spec.group_hi <= rank_bound, "probe_spectrum: group exceeds rank");
  CDSR_CHECK(spec.coefficient >= 0.0 && spec.coefficient <= 1.0,
             "probe_spectrum: coefficient must be in [0,1]");
  Eigen::BDCSVD<Mat> svd(e_hat, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vec s = svd.singularValues();
  for (int k = spec.group_lo - 1; k < spec.group_hi; ++k) s(k) *= spec.coefficient;
  return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

Vec singular_values(const Mat& m) {
  Eigen::BDCSVD<Mat> svd(m);
  return svd.singularValues();
}

}  // namespace cdsr
