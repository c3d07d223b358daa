#pragma once

#include "cdsr/autodiff.hpp"
#include "cdsr/common.hpp"
#include "cdsr/corpus.hpp"

#include <Eigen/SparseCore>

#include <vector>

namespace cdsr {

// Weighted sparse item-item graph in coordinate form, row-sorted.
struct SparseAdjacency {
  enum class Normalization : uint8_t { None, Symmetric };

  struct Entry {
    int32_t row;
    int32_t col;
    double weight;
  };

  int32_t n = 0;
  Normalization normalization = Normalization::None;
  std::vector<Entry> entries;

  Eigen::SparseMatrix<double> to_sparse() const;
  // degree-zero nodes (no incident edges)
  std::vector<char> isolated_mask() const;
  double weight_at(int32_t row, int32_t col) const;  // 0 when absent
};

struct PropagationConfig {
  int layers = 2;
};

// Undirected co-occurrence over each user's domain-restricted subsequence:
// every pair at distance <= window adds weight 1 to both directions,
// self-loops excluded. The node count is the max of the largest index seen
// and min_nodes, so items absent from these sequences (e.g. held-out
// targets) stay as isolated nodes of the full index space.
SparseAdjacency build_domain_graph(const std::vector<CrossDomainSequence>& sequences,
                                   Domain domain, int window = 1,
                                   int32_t min_nodes = 0);

// Same rule over the full mixed sequences in global index space.
SparseAdjacency build_mixed_graph(const std::vector<CrossDomainSequence>& sequences,
                                  const DomainVocab& vocab, int window = 1);

// raw_weight / sqrt(d_i * d_j) with d the weighted degree.
SparseAdjacency normalize_symmetric(const SparseAdjacency& adj);

// Layer-averaged propagation: (sum_{l=0..L} E_l) / (L+1), E_l = Norm(A) E_{l-1}.
// Isolated nodes copy their layer-0 row at every layer so their embedding
// passes through unchanged.
Mat propagate(const SparseAdjacency& normalized, const Mat& embeddings,
              const PropagationConfig& cfg);

// Sparse operands for the tape version; owns the matrix the tape borrows.
struct PropagationOperand {
  Eigen::SparseMatrix<double> norm_adj;
  std::vector<char> isolated;

  static PropagationOperand from(const SparseAdjacency& normalized);
};

ad::Var propagate_t(ad::Tape& tape, const PropagationOperand& op, ad::Var embeddings,
                    const PropagationConfig& cfg);

}  // namespace cdsr
