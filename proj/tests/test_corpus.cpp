#include <doctest.h>

#include "cdsr/corpus.hpp"

#include <cmath>
#include <map>
#include <sstream>

using namespace cdsr;

namespace {

std::string to_tsv(const std::vector<InteractionEvent>& events) {
  std::ostringstream os;
  for (const auto& e : events)
    os << e.user_id << '\t' << e.item_id << '\t' << domain_letter(e.domain) << '\t'
       << e.timestamp << '\n';
  return os.str();
}

bool same_event(const InteractionEvent& a, const InteractionEvent& b) {
  return a.user_id == b.user_id && a.item_id == b.item_id && a.domain == b.domain &&
         a.timestamp == b.timestamp;
}

}  // namespace

TEST_CASE("ingest: well-formed lines parse and sort per user") {
  std::istringstream in(
      "u2\ti1\tX\t30\n"
      "u1\ti2\tY\t20\n"
      "u1\ti3\tX\t10\n"
      "u2\ti4\tY\t5\n");
  auto report = ingest_events(in);
  REQUIRE(report.events.size() == 4);
  CHECK(report.rejected.empty());
  CHECK(report.events[0].user_id == "u1");
  CHECK(report.events[0].item_id == "i3");  // earliest timestamp first
  CHECK(report.events[1].item_id == "i2");
  CHECK(report.events[2].user_id == "u2");
  CHECK(report.events[2].item_id == "i4");
}

TEST_CASE("ingest: unknown domain tag is rejected with its line number") {
  std::istringstream in(
      "u1\ti1\tX\t1\n"
      "u1\ti2\tZ\t2\n"
      "u1\ti3\tY\t3\n");
  auto report = ingest_events(in);
  CHECK(report.events.size() == 2);
  REQUIRE(report.rejected.size() == 1);
  CHECK(report.rejected[0].first == 2);
}

TEST_CASE("ingest: malformed field counts and timestamps are rejected") {
  std::istringstream in(
      "u1\ti1\tX\n"
      "u1\ti1\tX\tnotanumber\n"
      "u1\ti1\tX\t-5\n"
      "\ti1\tX\t3\n");
  auto report = ingest_events(in);
  CHECK(report.events.empty());
  CHECK(report.rejected.size() == 4);
}

TEST_CASE("ingest: a generated corpus round-trips losslessly through text") {
  SyntheticSpec spec;
  spec.n_users = 300;
  spec.n_items_per_domain = 40;
  spec.n_clusters = 4;
  spec.transfer_strength = 0.5;
  spec.seq_len_min = 8;
  spec.seq_len_max = 12;
  spec.seed = 7;
  auto events = generate_synthetic(spec);
  REQUIRE(events.size() > 2000);

  std::istringstream in(to_tsv(events));
  auto report = ingest_events(in);
  REQUIRE(report.rejected.empty());
  REQUIRE(report.events.size() == events.size());

  // ingest sorts by (user, timestamp) stably; apply the same order to the input
  std::stable_sort(events.begin(), events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) {
                     if (a.user_id != b.user_id) return a.user_id < b.user_id;
                     return a.timestamp < b.timestamp;
                   });
  for (size_t i = 0; i < events.size(); ++i)
    CHECK(same_event(events[i], report.events[i]));
}

TEST_CASE("build_corpus: single-domain users are dropped as non-common") {
  std::vector<InteractionEvent> events;
  for (int t = 0; t < 12; ++t) events.push_back({"loner", "x" + std::to_string(t % 2), Domain::X, t});
  // a surviving common user keeps the corpus non-empty
  for (int t = 0; t < 12; ++t) {
    events.push_back({"common", "x0", Domain::X, 2 * t});
    events.push_back({"common", "y0", Domain::Y, 2 * t + 1});
  }
  CorpusStats stats;
  auto [vocab, seqs] = build_corpus(events, 3, 3, &stats);
  CHECK(stats.users_not_common == 1);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].user_id == "common");
}

TEST_CASE("build_corpus: dense synthetic corpus survives filtering untouched") {
  SyntheticSpec spec;
  spec.n_users = 200;
  spec.n_items_per_domain = 20;
  spec.n_clusters = 4;
  spec.transfer_strength = 0.3;
  spec.seq_len_min = 10;
  spec.seq_len_max = 12;
  spec.seed = 11;
  auto events = generate_synthetic(spec);

  // brute-force recount oracle: every item and user meets the threshold
  std::map<std::string, int> item_count, user_count;
  for (const auto& e : events) {
    ++item_count[e.item_id];
    ++user_count[e.user_id];
  }
  for (const auto& [item, c] : item_count) REQUIRE(c >= 10);
  for (const auto& [user, c] : user_count) REQUIRE(c >= 10);

  CorpusStats stats;
  auto [vocab, seqs] = build_corpus(events, 10, 3, &stats);
  CHECK(stats.items_removed_freq == 0);
  CHECK(stats.users_removed_freq == 0);
  CHECK(stats.users_removed_domain_len == 0);
  CHECK(stats.users_not_common == 0);
  CHECK(stats.retained_users == spec.n_users);
  CHECK(stats.retained_events == static_cast<int64_t>(events.size()));
  CHECK(vocab.size(Domain::X) == static_cast<int32_t>(
            std::count_if(item_count.begin(), item_count.end(),
                          [](const auto& kv) { return kv.first[0] == 'x'; })));
}

TEST_CASE("build_corpus: every retained user keeps min_domain_len items per domain") {
  // craft a user whose Y side collapses below the domain minimum after
  // item filtering
  std::vector<InteractionEvent> events;
  for (int t = 0; t < 10; ++t) {
    events.push_back({"weak", "x0", Domain::X, 3 * t});
    events.push_back({"weak", "rare" + std::to_string(t), Domain::Y, 3 * t + 1});
  }
  for (int t = 0; t < 14; ++t) {
    events.push_back({"strong", "x0", Domain::X, 2 * t});
    events.push_back({"strong", "y0", Domain::Y, 2 * t + 1});
  }
  CorpusStats stats;
  auto [vocab, seqs] = build_corpus(events, 10, 3, &stats);
  for (const auto& s : seqs) {
    CHECK(s.count_domain(Domain::X) >= 3);
    CHECK(s.count_domain(Domain::Y) >= 3);
  }
  CHECK(stats.users_removed_domain_len == 1);
  REQUIRE(seqs.size() == 1);
  CHECK(seqs[0].user_id == "strong");
}

TEST_CASE("build_corpus: empty result is a fatal error with diagnostics") {
  std::vector<InteractionEvent> events{{"u", "i", Domain::X, 0}};
  CHECK_THROWS_AS(build_corpus(events, 10, 3), FatalError);
}

TEST_CASE("splits: one two-domain user yields exactly two eval instances") {
  CrossDomainSequence seq;
  seq.user_id = "u";
  seq.mixed = {{0, Domain::X}, {0, Domain::Y}, {1, Domain::X},
               {1, Domain::Y}, {2, Domain::X}, {2, Domain::Y}};
  auto split = make_splits({seq}, 42);
  REQUIRE(split.eval_instances.size() == 2);
  CHECK(split.eval_instances[0].domain == Domain::X);
  CHECK(split.eval_instances[0].target_local == 2);
  CHECK(split.eval_instances[0].prefix.size() == 4);  // everything before last X
  CHECK(split.eval_instances[1].domain == Domain::Y);
  CHECK(split.eval_instances[1].target_local == 2);
  CHECK(split.eval_instances[1].prefix.size() == 5);
  REQUIRE(split.train.size() == 1);
  CHECK(split.train[0].mixed.size() == 4);  // both finals removed
}

TEST_CASE("splits: deterministic in the seed and balanced per domain") {
  SyntheticSpec spec;
  spec.n_users = 100;
  spec.n_items_per_domain = 20;
  spec.n_clusters = 4;
  spec.transfer_strength = 0.5;
  spec.seq_len_min = 10;
  spec.seq_len_max = 12;
  spec.seed = 3;
  auto [vocab, seqs] = build_corpus(generate_synthetic(spec), 5, 3);

  auto a = make_splits(seqs, 99);
  auto b = make_splits(seqs, 99);
  REQUIRE(a.eval_instances.size() == b.eval_instances.size());
  for (size_t i = 0; i < a.eval_instances.size(); ++i)
    CHECK(a.eval_instances[i].partition == b.eval_instances[i].partition);

  for (Domain d : {Domain::X, Domain::Y}) {
    int n_val = 0, n_test = 0;
    for (const auto& inst : a.eval_instances) {
      if (inst.domain != d) continue;
      (inst.partition == Partition::Val ? n_val : n_test)++;
    }
    CHECK(std::abs(n_val - n_test) <= 1);
    CHECK(n_val + n_test == static_cast<int>(seqs.size()));
  }
}

TEST_CASE("splits: train plus eval targets reassemble the corpus per user") {
  SyntheticSpec spec;
  spec.n_users = 60;
  spec.n_items_per_domain = 16;
  spec.n_clusters = 4;
  spec.transfer_strength = 0.7;
  spec.seq_len_min = 8;
  spec.seq_len_max = 14;
  spec.seed = 21;
  auto [vocab, seqs] = build_corpus(generate_synthetic(spec), 5, 3);
  auto split = make_splits(seqs, 17);

  auto key = [](const ItemTok& t) { return t.local * 2 + static_cast<int>(t.dom); };
  for (const auto& orig : seqs) {
    std::map<int, int> want, got;
    for (const auto& t : orig.mixed) ++want[key(t)];
    for (const auto& tr : split.train)
      if (tr.user_id == orig.user_id)
        for (const auto& t : tr.mixed) ++got[key(t)];
    for (const auto& inst : split.eval_instances)
      if (inst.user_id == orig.user_id)
        ++got[key({inst.target_local, inst.domain})];
    CHECK(want == got);
  }
}

TEST_CASE("truncate_pad: short sequences left-pad, long ones drop the oldest") {
  DomainVocab vocab;
  for (int i = 0; i < 50; ++i) vocab.add(Domain::X, "x" + std::to_string(i));
  vocab.add(Domain::Y, "y0");

  CrossDomainSequence shorty;
  shorty.user_id = "s";
  for (int i = 0; i < 5; ++i) shorty.mixed.push_back({i, Domain::X});
  auto p = truncate_pad(shorty, vocab, 30);
  CHECK(p.first_real == 25);
  for (int i = 0; i < 25; ++i) CHECK(p.global[i] == -1);
  CHECK(p.global[25] == 0);
  CHECK(p.global[29] == 4);

  CrossDomainSequence longy;
  longy.user_id = "l";
  for (int i = 0; i < 40; ++i) longy.mixed.push_back({i, Domain::X});
  auto q = truncate_pad(longy, vocab, 30);
  CHECK(q.first_real == 0);
  CHECK(q.global[0] == 10);  // oldest ten dropped
  CHECK(q.global[29] == 39);
}

TEST_CASE("truncate_pad: views partition the non-pad positions") {
  SyntheticSpec spec;
  spec.n_users = 40;
  spec.n_items_per_domain = 12;
  spec.n_clusters = 3;
  spec.transfer_strength = 0.4;
  spec.seq_len_min = 4;
  spec.seq_len_max = 40;
  spec.seed = 5;
  auto [vocab, seqs] = build_corpus(generate_synthetic(spec), 2, 2);
  for (const auto& s : seqs) {
    auto p = truncate_pad(s, vocab, 30);
    for (int t = 0; t < p.n; ++t) {
      if (p.global[t] == -1) {
        CHECK(p.view_x[t] == -1);
        CHECK(p.view_y[t] == -1);
      } else {
        // exactly one view holds the item, and it matches the mixed token
        CHECK((p.view_x[t] == -1) != (p.view_y[t] == -1));
        int local = p.view_x[t] != -1 ? p.view_x[t] : p.view_y[t];
        Domain d = p.view_x[t] != -1 ? Domain::X : Domain::Y;
        CHECK(vocab.global_of(d, local) == p.global[t]);
        CHECK(d == p.dom[t]);
      }
    }
  }
}

TEST_CASE("synthetic: zero transfer strength decouples the domains") {
  SyntheticSpec spec;
  spec.n_users = 20000;
  spec.n_items_per_domain = 40;
  spec.n_clusters = 4;
  spec.transfer_strength = 0.0;
  spec.seq_len_min = 10;
  spec.seq_len_max = 10;
  spec.seed = 13;
  auto events = generate_synthetic(spec);

  // consecutive (X cluster -> next Y cluster) pairs within each user
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> px, py;
  double n = 0;
  for (size_t i = 0; i + 1 < events.size(); ++i) {
    if (events[i].user_id != events[i + 1].user_id) continue;
    if (events[i].domain != Domain::X || events[i + 1].domain != Domain::Y) continue;
    int a = synthetic_cluster_of(events[i].item_id, spec);
    int b = synthetic_cluster_of(events[i + 1].item_id, spec);
    joint[{a, b}] += 1;
    px[a] += 1;
    py[b] += 1;
    n += 1;
  }
  REQUIRE(n >= 1e5);
  double mi = 0.0;
  for (const auto& [ab, c] : joint) {
    double pxy = c / n;
    mi += pxy * std::log2(pxy / ((px[ab.first] / n) * (py[ab.second] / n)));
  }
  CHECK(mi < 0.05);
}

TEST_CASE("synthetic: full transfer strength copies the preceding cluster") {
  SyntheticSpec spec;
  spec.n_users = 500;
  spec.n_items_per_domain = 40;
  spec.n_clusters = 4;
  spec.transfer_strength = 1.0;
  spec.seq_len_min = 8;
  spec.seq_len_max = 12;
  spec.seed = 29;
  auto events = generate_synthetic(spec);
  for (size_t i = 0; i + 1 < events.size(); ++i) {
    if (events[i].user_id != events[i + 1].user_id) continue;
    if (events[i].domain != Domain::X || events[i + 1].domain != Domain::Y) continue;
    CHECK(synthetic_cluster_of(events[i].item_id, spec) ==
          synthetic_cluster_of(events[i + 1].item_id, spec));
  }
}

TEST_CASE("synthetic: identical spec and seed reproduce the event list") {
  SyntheticSpec spec;
  spec.n_users = 50;
  spec.n_items_per_domain = 20;
  spec.n_clusters = 2;
  spec.transfer_strength = 0.6;
  spec.seq_len_min = 6;
  spec.seq_len_max = 9;
  spec.seed = 4242;
  auto a = generate_synthetic(spec);
  auto b = generate_synthetic(spec);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(same_event(a[i], b[i]));
}
