#pragma once

#include "cdsr/autodiff.hpp"
#include "cdsr/common.hpp"
#include "cdsr/nn.hpp"

namespace cdsr {

// relative threshold below which the filter direction is considered dead
inline constexpr double kDegenerateFilterTol = 1e-10;

// Learnable per-domain filter means; the filter distribution has identity
// covariance.
struct FilterParams {
  Mat mu_x;  // 1 x d
  Mat mu_y;  // 1 x d
  void init(int d, Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
  const Mat& mu(Domain d) const { return d == Domain::X ? mu_x : mu_y; }
};

// 1-based inclusive singular-value group with a scaling coefficient.
struct ProbeSpec {
  int group_lo = 1;
  int group_hi = 5;
  double coefficient = 1.0;
};

// v = mu + eps (identity covariance reparameterization)
Mat sample_filter(const Mat& mu, const Mat& eps);

struct FilterResult {
  Mat filtered;
  bool degenerate = false;
};

// Deletes the spectral component selected by v: with vhat = E^T E v,
// Ebar = E - E vhat vhat^T / |vhat|^2. A vhat below
// kDegenerateFilterTol * |E|_F returns the input unchanged, flagged.
FilterResult apply_rank1_filter(const Mat& e_hat, const Mat& v);

// Tape version; degeneracy decided from current values, flag optional.
ad::Var apply_rank1_filter_t(ad::Tape& t, ad::Var e_hat, ad::Var v,
                             bool* degenerate = nullptr);

// Sum of two aligned-row InfoNCE terms (domain X pairs + domain Y pairs).
// Either side may be empty (0 rows) but not both.
double inter_infonce(const Mat& ebar_x, const Mat& etil_x, const Mat& ebar_y,
                     const Mat& etil_y, double tau);
ad::Var inter_infonce_t(ad::Tape& t, ad::Var ebar_x, ad::Var etil_x, ad::Var ebar_y,
                        ad::Var etil_y, double tau);

// Thin SVD, scale singular values inside the group, recompose.
Mat probe_spectrum(const Mat& e_hat, const ProbeSpec& spec);

// Singular values of a matrix, descending (probe/report helper).
Vec singular_values(const Mat& m);

}  // namespace cdsr
