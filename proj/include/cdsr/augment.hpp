#pragma once

#include "cdsr/autodiff.hpp"
#include "cdsr/common.hpp"
#include "cdsr/corpus.hpp"
#include "cdsr/nn.hpp"

#include <vector>

namespace cdsr {

// numerical guard on the positivity map: sigma = max(softplus(raw), floor)
inline constexpr double kSigmaFloor = 1e-4;
// in-batch anchor cap per domain per step
inline constexpr int kMaxContrastItems = 512;

// One domain's noise generator: sequence encoder plus mu/sigma heads.
struct NoiseGeneratorParams {
  nn::GruParams encoder;  // input d, hidden d
  nn::MlpParams mu;       // d -> d -> d
  nn::MlpParams sigma;    // d -> d -> d, softplus floor on output
  void init(int d, Rng& rng);
  void visit(const std::string& prefix, const nn::ParamVisitor& f);
};

struct AugmentConfig {
  double alpha = 0.1;
  double tau = 0.2;
};

// Final hidden state over the rows of item_reps in order (len x d -> 1 x d).
// Errors when item_reps is empty.
Mat encode_sequence(const NoiseGeneratorParams& p, const Mat& item_reps);

Mat noise_mu(const NoiseGeneratorParams& p, const Mat& h);
Mat noise_sigma(const NoiseGeneratorParams& p, const Mat& h);  // strictly positive
// beta = mu(h) + eps .* sigma(h), rows independent
Mat sample_noise(const NoiseGeneratorParams& p, const Mat& h, const Mat& eps);

Mat augment_items(const Mat& e_hat_rows, const Mat& beta_rows, double alpha);

// -sum_i log( exp(cos(a_i, p_i)/tau) / sum_j exp(cos(a_i, p_j)/tau) )
double intra_infonce(const Mat& anchor, const Mat& positive, double tau);

// --- tape versions -------------------------------------------------------

// Batched encoder over left-padded views: steps[t][row] indexes table (or -1
// for an inactive row at that step). Rows with no active step return zeros.
ad::Var encode_batch_t(ad::Tape& t, const nn::Binder& b, const nn::GruParams& p,
                       ad::Var table, const std::vector<std::vector<int32_t>>& steps);

ad::Var noise_sigma_t(ad::Tape& t, const nn::Binder& b, const NoiseGeneratorParams& p,
                      ad::Var h);
ad::Var sample_noise_t(ad::Tape& t, const nn::Binder& b, const NoiseGeneratorParams& p,
                       ad::Var h, const Mat& eps);

// cosine-similarity InfoNCE over aligned rows
ad::Var infonce_pairs_t(ad::Tape& t, ad::Var anchor, ad::Var positive, double tau);

// Unique-item bookkeeping for the in-batch contrastive sets: items in first-
// occurrence order (capped), each with the batch row of the sequence that
// first contained it.
struct ContrastSet {
  std::vector<int32_t> items;   // local indices into the domain table
  std::vector<int32_t> owners;  // batch row whose noise this item uses
};
ContrastSet collect_contrast_items(const std::vector<PaddedSequence>& batch, Domain dom,
                                   int cap = kMaxContrastItems);

}  // namespace cdsr
