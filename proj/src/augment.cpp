#include "cdsr/augment.hpp"

#include <cmath>
#include <unordered_set>

namespace cdsr {

void NoiseGeneratorParams::init(int d, Rng& rng) {
  encoder.init(d, d, rng);
  mu.init(d, d, d, rng);
  sigma.init(d, d, d, rng);
}

void NoiseGeneratorParams::visit(const std::string& prefix, const nn::ParamVisitor& f) {
  encoder.visit(prefix + ".enc", f);
  mu.visit(prefix + ".mu", f);
  sigma.visit(prefix + ".sigma", f);
}

Mat encode_sequence(const NoiseGeneratorParams& p, const Mat& item_reps) {
  CDSR_CHECK(item_reps.rows() >= 1, "encode_sequence: empty sequence");
  Mat h = Mat::Zero(1, p.encoder.hidden());
  for (int i = 0; i < item_reps.rows(); ++i)
    h = nn::gru_step_plain(p.encoder, item_reps.row(i), h);
  return h;
}

Mat noise_mu(const NoiseGeneratorParams& p, const Mat& h) {
  return nn::mlp_apply_plain(p.mu, h);
}

Mat noise_sigma(const NoiseGeneratorParams& p, const Mat& h) {
  Mat raw = nn::mlp_apply_plain(p.sigma, h);
  return raw
      .unaryExpr([](double x) {
        double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        return std::max(sp, kSigmaFloor);
      })
      .eval();
}

Mat sample_noise(const NoiseGeneratorParams& p, const Mat& h, const Mat& eps) {
  CDSR_CHECK(eps.rows() == h.rows() && eps.cols() == h.cols(),
             "sample_noise: eps shape mismatch");
  return noise_mu(p, h) + eps.cwiseProduct(noise_sigma(p, h));
}

Mat augment_items(const Mat& e_hat_rows, const Mat& beta_rows, double alpha) {
  CDSR_CHECK(e_hat_rows.rows() == beta_rows.rows() &&
                 e_hat_rows.cols() == beta_rows.cols(),
             "augment_items: shape mismatch");
  return e_hat_rows + alpha * beta_rows;
}

double intra_infonce(const Mat& anchor, const Mat& positive, double tau) {
  ad::Tape t;
  ad::Var loss = infonce_pairs_t(t, t.constant(anchor), t.constant(positive), tau);
  return t.val(loss)(0, 0);
}

ad::Var encode_batch_t(ad::Tape& t, const nn::Binder& b, const nn::GruParams& p,
                       ad::Var table, const std::vector<std::vector<int32_t>>& steps) {
  CDSR_CHECK(!steps.empty(), "encode_batch_t: no steps");
  const int rows = static_cast<int>(steps[0].size());
  ad::Var h = t.constant(Mat::Zero(rows, p.hidden()));
  for (const auto& idx : steps) {
    CDSR_CHECK(static_cast<int>(idx.size()) == rows, "encode_batch_t: ragged steps");
    std::vector<char> active(idx.size());
    bool any = false;
    for (size_t i = 0; i < idx.size(); ++i) {
      active[i] = idx[i] >= 0;
      any = any || active[i];
    }
    if (!any) continue;  // nothing to consume at this step
    ad::Var x = t.gather_rows(table, idx);
    ad::Var stepped = nn::gru_step(t, b, p, x, h);
    h = t.select_rows(stepped, h, std::move(active));
  }
  return h;
}

ad::Var noise_sigma_t(ad::Tape& t, const nn::Binder& b, const NoiseGeneratorParams& p,
                      ad::Var h) {
  ad::Var raw = nn::mlp_apply(t, b, p.sigma, h);
  ad::Var sp = t.softplus(raw);
  // max(sp, floor) == relu(sp - floor) + floor; gradient stops below the floor
  const Mat& v = t.val(sp);
  ad::Var floor_c = t.constant(Mat::Constant(v.rows(), v.cols(), kSigmaFloor));
  return t.add(t.relu(t.sub(sp, floor_c)), floor_c);
}

ad::Var sample_noise_t(ad::Tape& t, const nn::Binder& b, const NoiseGeneratorParams& p,
                       ad::Var h, const Mat& eps) {
  ad::Var mu = nn::mlp_apply(t, b, p.mu, h);
  ad::Var sig = noise_sigma_t(t, b, p, h);
  return t.add(mu, t.mul(t.constant(eps), sig));
}

ad::Var infonce_pairs_t(ad::Tape& t, ad::Var anchor, ad::Var positive, double tau) {
  CDSR_CHECK(t.val(anchor).rows() >= 1, "infonce: empty batch");
  CDSR_CHECK(t.val(anchor).rows() == t.val(positive).rows(),
             "infonce: row count mismatch");
  ad::Var an = t.rownormalize(anchor, 1e-12);
  ad::Var pn = t.rownormalize(positive, 1e-12);
  return t.infonce_from_sim(t.matmul_nt(an, pn), tau);
}

ContrastSet collect_contrast_items(const std::vector<PaddedSequence>& batch, Domain dom,
                                   int cap) {
  ContrastSet set;
  std::unordered_set<int32_t> seen;
  for (size_t row = 0; row < batch.size(); ++row) {
    const auto& view = dom == Domain::X ? batch[row].view_x : batch[row].view_y;
    for (int t = 0; t < batch[row].n; ++t) {
      if (view[t] < 0) continue;
      if (static_cast<int>(set.items.size()) >= cap) return set;
      if (seen.insert(view[t]).second) {
        set.items.push_back(view[t]);
        set.owners.push_back(static_cast<int32_t>(row));
      }
    }
  }
  return set;
}

}  // namespace cdsr
