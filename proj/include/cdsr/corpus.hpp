#pragma once

#include "cdsr/common.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace cdsr {

// One (user, item, domain, timestamp) record; the atom of ingestion.
struct InteractionEvent {
  std::string user_id;
  std::string item_id;
  Domain domain = Domain::X;
  int64_t timestamp = 0;
};

struct IngestReport {
  std::vector<InteractionEvent> events;
  int64_t total_lines = 0;
  // (1-based line number, reason) for every rejected line
  std::vector<std::pair<int64_t, std::string>> rejected;
};

// Dense per-domain item indexing. Local indices start at 0 per domain; the
// reserved pad index (== size(dom)) embeds to the zero vector and never
// appears in graphs or prediction heads. Global indices place Y after X.
class DomainVocab {
 public:
  int32_t size(Domain d) const { return static_cast<int32_t>(items_[idx(d)].size()); }
  int32_t total() const { return size(Domain::X) + size(Domain::Y); }
  int32_t pad_local(Domain d) const { return size(d); }

  int32_t global_of(Domain d, int32_t local) const {
    return d == Domain::X ? local : size(Domain::X) + local;
  }
  Domain domain_of_global(int32_t global) const {
    return global < size(Domain::X) ? Domain::X : Domain::Y;
  }
  int32_t local_of_global(int32_t global) const {
    return global < size(Domain::X) ? global : global - size(Domain::X);
  }

  // -1 when the item is unknown
  int32_t find(Domain d, const std::string& item) const {
    auto it = index_[idx(d)].find(item);
    return it == index_[idx(d)].end() ? -1 : it->second;
  }
  const std::string& item_string(Domain d, int32_t local) const {
    return items_[idx(d)].at(local);
  }

  int32_t add(Domain d, const std::string& item) {
    auto [it, inserted] =
        index_[idx(d)].emplace(item, static_cast<int32_t>(items_[idx(d)].size()));
    if (inserted) items_[idx(d)].push_back(item);
    return it->second;
  }

 private:
  static int idx(Domain d) { return static_cast<int>(d); }
  std::unordered_map<std::string, int32_t> index_[2];
  std::vector<std::string> items_[2];
};

// One position of a mixed sequence: local index plus its domain tag.
struct ItemTok {
  int32_t local = -1;
  Domain dom = Domain::X;
  bool operator==(const ItemTok&) const = default;
};

// A user's chronologically merged interaction sequence (no pads here;
// padding happens in truncate_pad).
struct CrossDomainSequence {
  std::string user_id;
  std::vector<ItemTok> mixed;

  int count_domain(Domain d) const {
    int c = 0;
    for (const auto& t : mixed)
      if (t.dom == d) ++c;
    return c;
  }
};

// Fixed-length left-padded window over a mixed sequence, with the two
// single-domain views. Pad slots hold -1.
struct PaddedSequence {
  std::string user_id;
  int n = 0;
  std::vector<int32_t> global;  // -1 at pads
  std::vector<Domain> dom;      // meaningful where global != -1
  std::vector<int32_t> view_x;  // local X index, -1 elsewhere
  std::vector<int32_t> view_y;
  int first_real = 0;           // == n when the window is all pads
};

enum class Partition : uint8_t { Val, Test };

struct EvalInstance {
  std::string user_id;
  Domain domain = Domain::X;
  std::vector<ItemTok> prefix;  // full mixed history before the target
  int32_t target_local = -1;
  Partition partition = Partition::Val;
};

struct DatasetSplit {
  std::vector<CrossDomainSequence> train;
  std::vector<EvalInstance> eval_instances;
};

struct SyntheticSpec {
  int n_users = 0;
  int n_items_per_domain = 0;
  int n_clusters = 1;
  double transfer_strength = 0.0;  // in [0, 1]
  int seq_len_min = 6;
  int seq_len_max = 6;
  uint64_t seed = 0;
};

struct CorpusStats {
  int64_t input_events = 0;
  int64_t users_seen = 0;
  int64_t users_not_common = 0;
  int64_t items_removed_freq = 0;
  int64_t users_removed_freq = 0;
  int64_t users_removed_domain_len = 0;
  int64_t retained_users = 0;
  int64_t retained_events = 0;
  int32_t items_x = 0;
  int32_t items_y = 0;
  double avg_mixed_len = 0.0;
};

// Parses tab-separated `user item domain timestamp` lines. Unknown domain
// labels and malformed lines are rejected with their line number. Events
// come back sorted by (user, timestamp), input order breaking ties.
IngestReport ingest_events(std::istream& in,
                           const std::map<std::string, Domain>& domain_map = {
                               {"X", Domain::X}, {"Y", Domain::Y}});

// Common-user restriction, then single-pass frequency filtering (items first,
// then users), then the per-domain minimum length rule. Fatal when nothing
// survives.
std::pair<DomainVocab, std::vector<CrossDomainSequence>> build_corpus(
    const std::vector<InteractionEvent>& events, int min_interactions = 10,
    int min_domain_len = 3, CorpusStats* stats = nullptr);

// Leave-one-out: per (user, domain) the final domain item becomes one eval
// instance; a seeded per-domain 50/50 shuffle assigns val/test.
DatasetSplit make_splits(const std::vector<CrossDomainSequence>& sequences,
                         uint64_t seed);

PaddedSequence truncate_pad(const CrossDomainSequence& seq,
                            const DomainVocab& vocab, int n = 30);
PaddedSequence truncate_pad_tokens(const std::string& user_id,
                                   const std::vector<ItemTok>& mixed,
                                   const DomainVocab& vocab, int n);

// Planted-structure corpus: domains alternate X,Y,...; each X item follows
// the user's X preference cluster and, with probability transfer_strength,
// the following Y item copies that cluster.
std::vector<InteractionEvent> generate_synthetic(const SyntheticSpec& spec);

// Cluster of a synthetic item id (parses the numeric part).
int synthetic_cluster_of(const std::string& item_id, const SyntheticSpec& spec);

}  // namespace cdsr
