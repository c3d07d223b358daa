#include "cdsr/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <set>
#include <sstream>

namespace cdsr {

namespace {

bool parse_int64(const std::string& s, int64_t* out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), *out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t pos = line.find('\t', start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

IngestReport ingest_events(std::istream& in,
                           const std::map<std::string, Domain>& domain_map) {
  CDSR_CHECK(!in.fail(), "ingest_events: unreadable source");
  IngestReport report;
  std::string line;
  while (std::getline(in, line)) {
    ++report.total_lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 4) {
      report.rejected.emplace_back(report.total_lines, "expected 4 tab-separated fields");
      continue;
    }
    auto dom_it = domain_map.find(fields[2]);
    if (dom_it == domain_map.end()) {
      report.rejected.emplace_back(report.total_lines,
                                   "unknown domain tag '" + fields[2] + "'");
      continue;
    }
    int64_t ts = 0;
    if (!parse_int64(fields[3], &ts) || ts < 0) {
      report.rejected.emplace_back(report.total_lines, "bad timestamp '" + fields[3] + "'");
      continue;
    }
    if (fields[0].empty() || fields[1].empty()) {
      report.rejected.emplace_back(report.total_lines, "empty user or item field");
      continue;
    }
    report.events.push_back({fields[0], fields[1], dom_it->second, ts});
  }
  std::stable_sort(report.events.begin(), report.events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) {
                     if (a.user_id != b.user_id) return a.user_id < b.user_id;
                     return a.timestamp < b.timestamp;
                   });
  return report;
}

std::pair<DomainVocab, std::vector<CrossDomainSequence>> build_corpus(
    const std::vector<InteractionEvent>& events, int min_interactions,
    int min_domain_len, CorpusStats* stats) {
  CDSR_CHECK(!events.empty(), "build_corpus: no events");
  CorpusStats local;
  CorpusStats& st = stats ? *stats : local;
  st = CorpusStats{};
  st.input_events = static_cast<int64_t>(events.size());

  // group per user, chronological (ties by input order)
  std::vector<InteractionEvent> sorted = events;
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) {
                     if (a.user_id != b.user_id) return a.user_id < b.user_id;
                     return a.timestamp < b.timestamp;
                   });

  struct UserEvents {
    std::vector<const InteractionEvent*> evs;
    bool has[2] = {false, false};
  };
  std::map<std::string, UserEvents> by_user;
  for (const auto& e : sorted) {
    auto& u = by_user[e.user_id];
    u.evs.push_back(&e);
    u.has[static_cast<int>(e.domain)] = true;
  }
  st.users_seen = static_cast<int64_t>(by_user.size());

  // common-user restriction
  for (auto it = by_user.begin(); it != by_user.end();) {
    if (!it->second.has[0] || !it->second.has[1]) {
      ++st.users_not_common;
      it = by_user.erase(it);
    } else {
      ++it;
    }
  }

  // item pass: frequency over common-user events
  std::map<std::pair<int, std::string>, int64_t> item_freq;
  for (const auto& [uid, u] : by_user)
    for (const auto* e : u.evs)
      ++item_freq[{static_cast<int>(e->domain), e->item_id}];
  std::set<std::pair<int, std::string>> kept_items;
  for (const auto& [key, freq] : item_freq) {
    if (freq >= min_interactions)
      kept_items.insert(key);
    else
      ++st.items_removed_freq;
  }

  // user pass: frequency over surviving events, then per-domain length
  struct Retained {
    std::string user;
    std::vector<const InteractionEvent*> evs;
  };
  std::vector<Retained> retained;
  for (const auto& [uid, u] : by_user) {
    std::vector<const InteractionEvent*> evs;
    for (const auto* e : u.evs)
      if (kept_items.count({static_cast<int>(e->domain), e->item_id})) evs.push_back(e);
    if (static_cast<int>(evs.size()) < min_interactions) {
      ++st.users_removed_freq;
      continue;
    }
    int len[2] = {0, 0};
    for (const auto* e : evs) ++len[static_cast<int>(e->domain)];
    if (len[0] < min_domain_len || len[1] < min_domain_len) {
      ++st.users_removed_domain_len;
      continue;
    }
    retained.push_back({uid, std::move(evs)});
  }

  if (retained.empty()) {
    std::ostringstream os;
    os << "build_corpus: empty corpus after filtering (input events "
       << st.input_events << ", users seen " << st.users_seen
       << ", non-common " << st.users_not_common << ", items removed "
       << st.items_removed_freq << ", users removed by frequency "
       << st.users_removed_freq << ", by domain length "
       << st.users_removed_domain_len << ")";
    fail(os.str());
  }

  // vocab over items present in the final event set, lexicographic order
  std::set<std::string> final_items[2];
  for (const auto& r : retained)
    for (const auto* e : r.evs)
      final_items[static_cast<int>(e->domain)].insert(e->item_id);
  DomainVocab vocab;
  for (int d = 0; d < 2; ++d)
    for (const auto& item : final_items[d])
      vocab.add(static_cast<Domain>(d), item);

  std::vector<CrossDomainSequence> sequences;
  int64_t total_len = 0;
  for (const auto& r : retained) {
    CrossDomainSequence seq;
    seq.user_id = r.user;
    for (const auto* e : r.evs)
      seq.mixed.push_back({vocab.find(e->domain, e->item_id), e->domain});
    total_len += static_cast<int64_t>(seq.mixed.size());
    sequences.push_back(std::move(seq));
  }

  st.retained_users = static_cast<int64_t>(sequences.size());
  st.retained_events = total_len;
  st.items_x = vocab.size(Domain::X);
  st.items_y = vocab.size(Domain::Y);
  st.avg_mixed_len = static_cast<double>(total_len) / static_cast<double>(sequences.size());
  return {std::move(vocab), std::move(sequences)};
}

DatasetSplit make_splits(const std::vector<CrossDomainSequence>& sequences,
                         uint64_t seed) {
  DatasetSplit split;
  std::vector<size_t> per_domain_instances[2];
  for (const auto& seq : sequences) {
    int last[2] = {-1, -1};
    for (int i = 0; i < static_cast<int>(seq.mixed.size()); ++i)
      last[static_cast<int>(seq.mixed[i].dom)] = i;
    CDSR_CHECK(last[0] >= 0 && last[1] >= 0,
               "make_splits: sequence missing a domain (corpus filter bug)");

    for (int d = 0; d < 2; ++d) {
      EvalInstance inst;
      inst.user_id = seq.user_id;
      inst.domain = static_cast<Domain>(d);
      inst.prefix.assign(seq.mixed.begin(), seq.mixed.begin() + last[d]);
      inst.target_local = seq.mixed[last[d]].local;
      per_domain_instances[d].push_back(split.eval_instances.size());
      split.eval_instances.push_back(std::move(inst));
    }

    CrossDomainSequence train_seq;
    train_seq.user_id = seq.user_id;
    for (int i = 0; i < static_cast<int>(seq.mixed.size()); ++i)
      if (i != last[0] && i != last[1]) train_seq.mixed.push_back(seq.mixed[i]);
    split.train.push_back(std::move(train_seq));
  }

  // seeded 50/50 per-domain partition; val gets the floor half
  for (int d = 0; d < 2; ++d) {
    auto& ids = per_domain_instances[d];
    Rng rng(mix_seed(seed, 0x5eed0 + d));
    std::shuffle(ids.begin(), ids.end(), rng);
    size_t n_val = ids.size() / 2;
    for (size_t i = 0; i < ids.size(); ++i)
      split.eval_instances[ids[i]].partition =
          i < n_val ? Partition::Val : Partition::Test;
  }
  return split;
}

PaddedSequence truncate_pad_tokens(const std::string& user_id,
                                   const std::vector<ItemTok>& mixed,
                                   const DomainVocab& vocab, int n) {
  CDSR_CHECK(n >= 1, "truncate_pad: N must be >= 1");
  PaddedSequence out;
  out.user_id = user_id;
  out.n = n;
  out.global.assign(n, -1);
  out.dom.assign(n, Domain::X);
  out.view_x.assign(n, -1);
  out.view_y.assign(n, -1);
  int keep = std::min<int>(n, static_cast<int>(mixed.size()));
  int start = static_cast<int>(mixed.size()) - keep;
  out.first_real = n - keep;
  for (int i = 0; i < keep; ++i) {
    const ItemTok& t = mixed[start + i];
    int pos = out.first_real + i;
    out.global[pos] = vocab.global_of(t.dom, t.local);
    out.dom[pos] = t.dom;
    if (t.dom == Domain::X)
      out.view_x[pos] = t.local;
    else
      out.view_y[pos] = t.local;
  }
  return out;
}

PaddedSequence truncate_pad(const CrossDomainSequence& seq,
                            const DomainVocab& vocab, int n) {
  return truncate_pad_tokens(seq.user_id, seq.mixed, vocab, n);
}

std::vector<InteractionEvent> generate_synthetic(const SyntheticSpec& spec) {
  CDSR_CHECK(spec.n_users > 0 && spec.n_items_per_domain > 0 && spec.n_clusters > 0,
             "generate_synthetic: sizes must be positive");
  CDSR_CHECK(spec.n_items_per_domain % spec.n_clusters == 0,
             "generate_synthetic: n_clusters must divide n_items_per_domain");
  CDSR_CHECK(spec.transfer_strength >= 0.0 && spec.transfer_strength <= 1.0,
             "generate_synthetic: transfer_strength must be in [0,1]");
  CDSR_CHECK(spec.seq_len_min >= 2 && spec.seq_len_max >= spec.seq_len_min,
             "generate_synthetic: bad seq_len_range");

  const int cluster_size = spec.n_items_per_domain / spec.n_clusters;
  constexpr double kPreferenceProb = 0.8;

  Rng rng(mix_seed(spec.seed, 0x531f));
  std::uniform_int_distribution<int> cluster_dist(0, spec.n_clusters - 1);
  std::uniform_int_distribution<int> within_dist(0, cluster_size - 1);
  std::uniform_int_distribution<int> len_dist(spec.seq_len_min, spec.seq_len_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<InteractionEvent> events;
  for (int u = 0; u < spec.n_users; ++u) {
    // independent per-domain preferences keep the domains decoupled at
    // transfer_strength = 0
    int pref_x = cluster_dist(rng);
    int pref_y = cluster_dist(rng);
    int len = len_dist(rng);
    std::string user = "u" + std::to_string(u);
    int last_x_cluster = 0;
    for (int t = 0; t < len; ++t) {
      Domain d = (t % 2 == 0) ? Domain::X : Domain::Y;
      int cluster;
      if (d == Domain::X) {
        cluster = unit(rng) < kPreferenceProb ? pref_x : cluster_dist(rng);
        last_x_cluster = cluster;
      } else {
        if (unit(rng) < spec.transfer_strength)
          cluster = last_x_cluster;
        else
          cluster = unit(rng) < kPreferenceProb ? pref_y : cluster_dist(rng);
      }
      int item = cluster * cluster_size + within_dist(rng);
      std::string item_id =
          (d == Domain::X ? "x" : "y") + std::to_string(item);
      events.push_back({user, item_id, d, t});
    }
  }
  return events;
}

int synthetic_cluster_of(const std::string& item_id, const SyntheticSpec& spec) {
  CDSR_CHECK(item_id.size() >= 2, "synthetic_cluster_of: bad id");
  int idx = std::stoi(item_id.substr(1));
  return idx / (spec.n_items_per_domain / spec.n_clusters);
}

}  // namespace cdsr
