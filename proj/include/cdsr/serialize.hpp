#pragma once

#include "cdsr/corpus.hpp"
#include "cdsr/evaluator.hpp"
#include "cdsr/graph.hpp"
#include "cdsr/params.hpp"
#include "cdsr/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace cdsr {

// ---------------------------------------------------------------------------
// Corpus directory: vocab.tsv, train.tsv, eval.tsv, stats.txt. Item tokens
// are the domain letter glued to the local index ("X3", "Y17").
// ---------------------------------------------------------------------------

struct CorpusOnDisk {
  DomainVocab vocab;
  DatasetSplit split;
};

void write_corpus_dir(const std::filesystem::path& dir, const DomainVocab& vocab,
                      const DatasetSplit& split,
                      const CorpusStats* stats = nullptr);
CorpusOnDisk read_corpus_dir(const std::filesystem::path& dir);

std::string format_stats(const CorpusStats& stats, const DatasetSplit& split);

// ---------------------------------------------------------------------------
// Graph edge list: one-line header "n=<count> norm=<none|symmetric>", then
// "row<TAB>col<TAB>weight" lines.
// ---------------------------------------------------------------------------

void write_graph(const std::filesystem::path& path, const SparseAdjacency& adj);
SparseAdjacency read_graph(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Tensor file: "CDSR" magic, u32 version, u32 count, then per tensor
// u32 name length, name bytes, u32 rows, u32 cols, row-major float32
// payload. Everything little-endian.
// ---------------------------------------------------------------------------

struct NamedTensor {
  std::string name;
  Mat value;
};

void write_tensors(const std::filesystem::path& path,
                   const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensors(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Checkpoint directory: manifest.json (hyperparameters, shapes, epoch,
// metrics, table flavour) + tensors.bin. A "propagated" checkpoint carries
// the three encoder input tables explicitly (the probe writes these) so
// evaluation skips graph propagation.
// ---------------------------------------------------------------------------

struct CheckpointMeta {
  HyperParams hp;
  int epoch = 0;
  double val_mrr = -1.0;  // negative = not recorded
  bool propagated = false;
};

struct Checkpoint {
  ParameterSet params;
  CheckpointMeta meta;
  std::optional<EvalTables> tables;  // present iff meta.propagated
};

void write_checkpoint(const std::filesystem::path& dir, const ParameterSet& params,
                      const CheckpointMeta& meta,
                      const EvalTables* tables = nullptr);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Run artifacts.
// ---------------------------------------------------------------------------

void write_metrics_json(const std::filesystem::path& path,
                        const std::vector<MetricsReport>& reports);
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricsReport>& reports);
void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochRecord>& history);
// Singular values before/after a probe, 1-based index.
void write_spectrum_csv(const std::filesystem::path& path, const Vec& pre,
                        const Vec& post);

}  // namespace cdsr
