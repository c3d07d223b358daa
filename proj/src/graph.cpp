#include "cdsr/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace cdsr {

Eigen::SparseMatrix<double> SparseAdjacency::to_sparse() const {
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(entries.size());
  for (const auto& e : entries) trips.emplace_back(e.row, e.col, e.weight);
  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

std::vector<char> SparseAdjacency::isolated_mask() const {
  std::vector<char> iso(static_cast<size_t>(n), 1);
  for (const auto& e : entries) {
    iso[static_cast<size_t>(e.row)] = 0;
    iso[static_cast<size_t>(e.col)] = 0;
  }
  return iso;
}

double SparseAdjacency::weight_at(int32_t row, int32_t col) const {
  for (const auto& e : entries)
    if (e.row == row && e.col == col) return e.weight;
  return 0.0;
}

namespace {

SparseAdjacency from_pair_counts(const std::map<std::pair<int32_t, int32_t>, double>& counts,
                                 int32_t n) {
  SparseAdjacency adj;
  adj.n = n;
  adj.entries.reserve(counts.size());
  for (const auto& [key, w] : counts)
    adj.entries.push_back({key.first, key.second, w});
  return adj;
}

void add_cooccurrence(std::map<std::pair<int32_t, int32_t>, double>& counts,
                      const std::vector<int32_t>& seq, int window) {
  const int len = static_cast<int>(seq.size());
  for (int i = 0; i < len; ++i) {
    for (int j = i + 1; j <= i + window && j < len; ++j) {
      int32_t a = seq[static_cast<size_t>(i)];
      int32_t b = seq[static_cast<size_t>(j)];
      if (a == b) continue;  // no self-loops
      counts[{a, b}] += 1.0;
      counts[{b, a}] += 1.0;
    }
  }
}

}  // namespace

SparseAdjacency build_domain_graph(const std::vector<CrossDomainSequence>& sequences,
                                   Domain domain, int window, int32_t min_nodes) {
  CDSR_CHECK(window >= 1, "co-occurrence window must be >= 1");
  std::map<std::pair<int32_t, int32_t>, double> counts;
  int32_t n = std::max<int32_t>(min_nodes, 0);
  bool seen_any = false;
  std::vector<int32_t> sub;
  for (const auto& seq : sequences) {
    sub.clear();
    for (const auto& tok : seq.mixed) {
      if (tok.dom != domain) continue;
      sub.push_back(tok.local);
      n = std::max(n, tok.local + 1);
      seen_any = true;
    }
    add_cooccurrence(counts, sub, window);
  }
  if (!seen_any)
    fail("cannot build a graph for domain " + std::string(1, domain_letter(domain)) +
         ": no items of that domain appear in any sequence");
  return from_pair_counts(counts, n);
}

SparseAdjacency build_mixed_graph(const std::vector<CrossDomainSequence>& sequences,
                                  const DomainVocab& vocab, int window) {
  CDSR_CHECK(window >= 1, "co-occurrence window must be >= 1");
  std::map<std::pair<int32_t, int32_t>, double> counts;
  std::vector<int32_t> glob;
  for (const auto& seq : sequences) {
    glob.clear();
    for (const auto& tok : seq.mixed)
      glob.push_back(vocab.global_of(tok.dom, tok.local));
    add_cooccurrence(counts, glob, window);
  }
  return from_pair_counts(counts, vocab.total());
}

SparseAdjacency normalize_symmetric(const SparseAdjacency& adj) {
  CDSR_CHECK(adj.normalization == SparseAdjacency::Normalization::None,
             "graph already normalized");
  std::vector<double> degree(static_cast<size_t>(adj.n), 0.0);
  for (const auto& e : adj.entries) degree[static_cast<size_t>(e.row)] += e.weight;

  SparseAdjacency out;
  out.n = adj.n;
  out.normalization = SparseAdjacency::Normalization::Symmetric;
  out.entries.reserve(adj.entries.size());
  for (const auto& e : adj.entries) {
    double di = degree[static_cast<size_t>(e.row)];
    double dj = degree[static_cast<size_t>(e.col)];
    CDSR_CHECK(di > 0.0 && dj > 0.0, "edge endpoint with zero degree");
    out.entries.push_back({e.row, e.col, e.weight / std::sqrt(di * dj)});
  }
  return out;
}

Mat propagate(const SparseAdjacency& normalized, const Mat& embeddings,
              const PropagationConfig& cfg) {
  CDSR_CHECK(normalized.normalization == SparseAdjacency::Normalization::Symmetric,
             "propagation expects a symmetrically normalized graph");
  CDSR_CHECK(embeddings.rows() == normalized.n, "embedding row count != node count");
  CDSR_CHECK(cfg.layers >= 0, "layer count must be >= 0");

  const Eigen::SparseMatrix<double> a = normalized.to_sparse();
  const std::vector<char> iso = normalized.isolated_mask();

  Mat layer = embeddings;
  Mat acc = embeddings;
  for (int l = 0; l < cfg.layers; ++l) {
    Mat next = a * layer;
    for (int32_t i = 0; i < normalized.n; ++i)
      if (iso[static_cast<size_t>(i)]) next.row(i) = embeddings.row(i);
    acc += next;
    layer = std::move(next);
  }
  Mat out = acc / static_cast<double>(cfg.layers + 1);
  // bitwise pass-through for degree-zero rows (mean of identical rows would
  // otherwise pick up rounding)
  for (int32_t i = 0; i < normalized.n; ++i)
    if (iso[static_cast<size_t>(i)]) out.row(i) = embeddings.row(i);
  return out;
}

PropagationOperand PropagationOperand::from(const SparseAdjacency& normalized) {
  CDSR_CHECK(normalized.normalization == SparseAdjacency::Normalization::Symmetric,
             "propagation expects a symmetrically normalized graph");
  PropagationOperand op;
  op.norm_adj = normalized.to_sparse();
  op.isolated = normalized.isolated_mask();
  return op;
}

ad::Var propagate_t(ad::Tape& tape, const PropagationOperand& op, ad::Var embeddings,
                    const PropagationConfig& cfg) {
  const auto n = static_cast<int32_t>(op.norm_adj.rows());
  CDSR_CHECK(tape.val(embeddings).rows() == n, "embedding row count != node count");
  CDSR_CHECK(cfg.layers >= 0, "layer count must be >= 0");

  // keep/replace masks implement the isolated-row pass-through on tape
  std::vector<char> keep(op.isolated.size());
  for (size_t i = 0; i < op.isolated.size(); ++i) keep[i] = op.isolated[i] ? 0 : 1;

  ad::Var layer = embeddings;
  ad::Var acc = embeddings;
  for (int l = 0; l < cfg.layers; ++l) {
    ad::Var prop = tape.spmm(&op.norm_adj, layer);
    ad::Var next = tape.add(tape.mask_rows(prop, keep), tape.mask_rows(embeddings, op.isolated));
    acc = tape.add(acc, next);
    layer = next;
  }
  ad::Var scaled = tape.scale(acc, 1.0 / static_cast<double>(cfg.layers + 1));
  // exact pass-through for degree-zero rows, matching the plain version
  return tape.select_rows(embeddings, scaled, op.isolated);
}

}  // namespace cdsr
