#include "cdsr/params.hpp"

namespace cdsr {

void HyperParams::validate() const {
  CDSR_CHECK(d > 0, "state width must be positive");
  CDSR_CHECK(n_window > 0, "window length must be positive");
  CDSR_CHECK(layers >= 0, "propagation depth cannot be negative");
  CDSR_CHECK(tau > 0.0, "temperature must be positive");
  CDSR_CHECK(alpha >= 0.0, "augmentation strength cannot be negative");
  CDSR_CHECK(batch > 0, "batch size must be positive");
  CDSR_CHECK(lr > 0.0, "learning rate must be positive");
  CDSR_CHECK(max_epochs > 0, "epoch budget must be positive");
  CDSR_CHECK(patience > 0, "patience must be positive");
  CDSR_CHECK(lambda1 >= 0.0 && lambda2 >= 0.0, "loss weights cannot be negative");
  CDSR_CHECK(n_anneal > 0, "annealing horizon must be positive");
  CDSR_CHECK(n_blocks > 0 && n_heads > 0, "encoder needs blocks and heads");
  CDSR_CHECK(d % n_heads == 0, "state width must divide across heads");
  CDSR_CHECK(dropout >= 0.0 && dropout < 1.0, "dropout rate must lie in [0,1)");
  CDSR_CHECK(cooccur_window >= 1, "co-occurrence window must be at least 1");
}

void ParameterSet::init(const HyperParams& hp, int nx, int ny) {
  hp.validate();
  CDSR_CHECK(nx > 0 && ny > 0, "both domains need at least one item");
  x_items = nx;
  y_items = ny;
  d = hp.d;
  Rng rng(mix_seed(hp.seed, 0x9a7a));
  embeddings = trunc_normal(nx + ny, d, 0.02, rng);
  noise_x.init(d, rng);
  noise_y.init(d, rng);
  filter.init(d, rng);
  encoder.init(hp.encoder, d, hp.n_window, hp.n_blocks, hp.n_heads, /*d_ff=*/d,
               hp.dropout, rng);
  head_x = nn::uniform_fanin(d, nx, d, rng);
  head_y = nn::uniform_fanin(d, ny, d, rng);
}

void ParameterSet::visit(const nn::ParamVisitor& f) {
  f("emb", embeddings);
  noise_x.visit("noise_x", f);
  noise_y.visit("noise_y", f);
  filter.visit("filter", f);
  encoder.visit("enc", f);
  f("head_x", head_x);
  f("head_y", head_y);
}

void ParameterSet::visit(
    const std::function<void(const std::string&, const Mat&)>& f) const {
  const_cast<ParameterSet*>(this)->visit(
      [&](const std::string& name, Mat& mat) { f(name, mat); });
}

}  // namespace cdsr
