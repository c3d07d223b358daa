#pragma once

#include "cdsr/augment.hpp"
#include "cdsr/common.hpp"
#include "cdsr/nn.hpp"
#include "cdsr/seqmodel.hpp"
#include "cdsr/spectrum.hpp"

#include <cstdint>
#include <string>

namespace cdsr {

struct AblationFlags {
  bool no_generation = false;    // drop the augmentation branch
  bool std_normal_noise = false; // noise bypasses the sequence-aware generator
  bool no_alignment = false;     // drop the alignment branch
  bool no_asf = false;           // align on unfiltered representations
  bool no_annealing = false;     // hold the schedule at its floor
};

struct HyperParams {
  int d = 256;
  int n_window = 30;   // padded sequence length
  int layers = 2;      // graph propagation depth
  double tau = 0.2;    // contrastive temperature
  double alpha = 0.1;  // augmentation strength
  int batch = 256;
  double lr = 1e-3;
  int max_epochs = 100;
  int patience = 5;
  double lambda1 = 0.3;
  double lambda2 = 0.3;
  int n_anneal = 50;
  uint64_t seed = 42;
  EncoderKind encoder = EncoderKind::GnnAtt;
  int n_blocks = 2;
  int n_heads = 2;
  double dropout = 0.2;
  int cooccur_window = 1;  // neighbourhood radius for graph edges
  AblationFlags ablation;

  void validate() const;
};

// Every learnable tensor. The embedding table is stored once; the X block
// occupies the first x_items rows and the Y block the rest, so the two
// domain tables and their concatenation can never diverge.
struct ParameterSet {
  int x_items = 0;
  int y_items = 0;
  int d = 0;
  Mat embeddings;  // (x_items + y_items) x d
  NoiseGeneratorParams noise_x, noise_y;
  FilterParams filter;
  EncoderParams encoder;
  Mat head_x;  // d x x_items
  Mat head_y;  // d x y_items

  void init(const HyperParams& hp, int x_items, int y_items);
  void visit(const nn::ParamVisitor& f);
  void visit(const std::function<void(const std::string&, const Mat&)>& f) const;
  Mat emb_x() const { return embeddings.topRows(x_items); }
  Mat emb_y() const { return embeddings.bottomRows(y_items); }
};

}  // namespace cdsr
