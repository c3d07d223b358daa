#include "cdsr/common.hpp"
#include "cdsr/config.hpp"
#include "cdsr/corpus.hpp"
#include "cdsr/evaluator.hpp"
#include "cdsr/graph.hpp"
#include "cdsr/serialize.hpp"
#include "cdsr/spectrum.hpp"
#include "cdsr/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace cdsr;

namespace {

// Exit code 2: bad arguments, bad config, missing or mismatched inputs.
// FatalError escaping to main is exit code 3 (runtime failure).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path out_root(const ExperimentConfig& cfg) {
  fs::path dir = cfg.out_dir;
  const char* root = std::getenv("CDSR_OUT_ROOT");
  if (root != nullptr && *root != '\0' && dir.is_relative())
    dir = fs::path(root) / dir;
  return dir;
}

ExperimentConfig load_config(const std::string& path) {
  try {
    if (path.empty()) return config_from_json(nlohmann::json::object());
    return load_config_file(path);
  } catch (const FatalError& e) {
    throw UsageError(e.what());
  }
}

void apply_overrides(ExperimentConfig& cfg, const std::optional<std::string>& out_dir,
                     const std::optional<uint64_t>& seed) {
  if (out_dir.has_value()) cfg.out_dir = *out_dir;
  if (seed.has_value()) {
    cfg.hp.seed = *seed;
    cfg.synth.seed = *seed;
  }
}

HyperParams apply_variant(HyperParams hp, const std::string& variant) {
  std::string v = variant;
  std::transform(v.begin(), v.end(), v.begin(),
                 [](unsigned char c) { return std::toupper(c); });
  if (v == "ALL" || v == "B") {
    hp.lambda1 = 0.0;
    hp.lambda2 = 0.0;
  } else if (v == "C") {
    hp.lambda1 = 0.0;
  } else if (v == "D") {
    hp.ablation.std_normal_noise = true;
  } else if (v == "E") {
    hp.lambda2 = 0.0;
  } else if (v == "F") {
    hp.ablation.no_asf = true;
  } else if (v == "G") {
    hp.ablation.no_annealing = true;
  } else {
    throw UsageError("unknown ablation variant '" + variant +
                     "' (expected one of B..G or 'all')");
  }
  return hp;
}

std::vector<uint64_t> parse_seeds(const std::string& csv) {
  std::vector<uint64_t> seeds;
  std::istringstream in(csv);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (tok.empty()) continue;
    try {
      seeds.push_back(std::stoull(tok));
    } catch (const std::exception&) {
      throw UsageError("bad seed '" + tok + "' in --seeds");
    }
  }
  if (seeds.empty()) throw UsageError("--seeds needs at least one value");
  return seeds;
}

ProbeSpec parse_group(const std::string& group, double coefficient) {
  ProbeSpec spec;
  spec.coefficient = coefficient;
  const auto dash = group.find('-');
  try {
    if (dash == std::string::npos) {
      spec.group_lo = spec.group_hi = std::stoi(group);
    } else {
      spec.group_lo = std::stoi(group.substr(0, dash));
      spec.group_hi = std::stoi(group.substr(dash + 1));
    }
  } catch (const std::exception&) {
    throw UsageError("bad --group '" + group + "' (expected k or lo-hi)");
  }
  if (spec.group_lo < 1 || spec.group_hi < spec.group_lo)
    throw UsageError("bad --group '" + group + "': need 1 <= lo <= hi");
  return spec;
}

CorpusOnDisk load_corpus(const fs::path& root) {
  const fs::path dir = root / "corpus";
  if (!fs::exists(dir / "vocab.tsv"))
    throw UsageError("no prepared corpus at " + dir.string() +
                     " (run prepare or synth first)");
  return read_corpus_dir(dir);
}

void write_corpus_artifacts(const fs::path& root, const DomainVocab& vocab,
                            const DatasetSplit& split, const CorpusStats& stats) {
  const fs::path dir = root / "corpus";
  write_corpus_dir(dir, vocab, split, &stats);
  write_graph(dir / "graph_mixed.tsv",
              build_mixed_graph(split.train, vocab, 1));
  write_graph(dir / "graph_x.tsv",
              build_domain_graph(split.train, Domain::X, 1, vocab.size(Domain::X)));
  write_graph(dir / "graph_y.tsv",
              build_domain_graph(split.train, Domain::Y, 1, vocab.size(Domain::Y)));
  std::cout << format_stats(stats, split);
}

std::vector<MetricsReport> eval_reports(Checkpoint& ckpt, const CorpusOnDisk& corpus,
                                        const std::vector<std::string>& partitions) {
  if (ckpt.params.x_items != corpus.vocab.size(Domain::X) ||
      ckpt.params.y_items != corpus.vocab.size(Domain::Y))
    throw UsageError("checkpoint vocabulary (" + std::to_string(ckpt.params.x_items) +
                     "+" + std::to_string(ckpt.params.y_items) +
                     " items) does not match the prepared corpus");
  EvalTables tables;
  if (ckpt.tables.has_value()) {
    tables = *ckpt.tables;
  } else {
    TrainGraphs graphs = build_graphs(corpus.split.train, corpus.vocab,
                                      ckpt.meta.hp.cooccur_window);
    tables = eval_tables(ckpt.params, graphs, ckpt.meta.hp);
  }
  std::vector<MetricsReport> out;
  for (const std::string& p : partitions) {
    MetricsReport r =
        evaluate(ckpt.params, tables, corpus.vocab, corpus.split.eval_instances,
                 p == "val" ? Partition::Val : Partition::Test,
                 ckpt.meta.hp.n_window);
    r.partition = p;
    out.push_back(r);
  }
  return out;
}

void print_reports(const std::vector<MetricsReport>& reports) {
  std::cout.precision(6);
  for (const auto& r : reports) {
    std::cout << r.partition << ": mean_mrr " << r.mean_mrr() << '\n';
    const std::pair<char, const DomainMetrics*> doms[] = {{'X', &r.x}, {'Y', &r.y}};
    for (const auto& [letter, m] : doms)
      std::cout << "  " << letter << "  mrr " << m->mrr << "  ndcg10 " << m->ndcg10
                << "  ndcg20 " << m->ndcg20 << "  recall10 " << m->recall10
                << "  recall20 " << m->recall20 << "  n " << m->n_instances << '\n';
  }
}

double median(std::vector<double> xs) {
  CDSR_CHECK(!xs.empty(), "median of an empty list");
  std::sort(xs.begin(), xs.end());
  const size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Field-wise median across per-seed reports of one partition.
MetricsReport median_report(const std::vector<MetricsReport>& runs) {
  CDSR_CHECK(!runs.empty(), "no reports to aggregate");
  MetricsReport out = runs.front();
  auto agg = [&](auto field) {
    for (DomainMetrics MetricsReport::* dom : {&MetricsReport::x, &MetricsReport::y}) {
      std::vector<double> xs;
      for (const auto& r : runs) xs.push_back((r.*dom).*field);
      (out.*dom).*field = median(xs);
    }
  };
  agg(&DomainMetrics::mrr);
  agg(&DomainMetrics::ndcg10);
  agg(&DomainMetrics::ndcg20);
  agg(&DomainMetrics::recall10);
  agg(&DomainMetrics::recall20);
  return out;
}

struct TrainOutcome {
  fs::path checkpoint_dir;
  std::vector<MetricsReport> reports;  // val + test of the best checkpoint
};

TrainOutcome train_once(const ExperimentConfig& cfg, const CorpusOnDisk& corpus,
                        const fs::path& run_dir, bool quiet) {
  try {
    cfg.hp.validate();
  } catch (const FatalError& e) {
    throw UsageError(e.what());
  }
  FitResult fit_result = fit(corpus.split, corpus.vocab, cfg.hp);
  if (!quiet) {
    std::cout.precision(6);
    for (const auto& rec : fit_result.history)
      std::cout << "epoch " << rec.epoch << "  total " << rec.losses.total
                << "  eta " << rec.losses.eta << "  val_mrr " << rec.val_mrr << '\n';
    std::cout << "best epoch " << fit_result.best_epoch << "  val_mrr "
              << fit_result.best_val_mrr << '\n';
  }

  fs::create_directories(run_dir);
  write_history_csv(run_dir / "history.csv", fit_result.history);
  CheckpointMeta meta;
  meta.hp = cfg.hp;
  meta.epoch = fit_result.best_epoch;
  meta.val_mrr = fit_result.best_val_mrr;
  const fs::path ckpt_dir = run_dir / "checkpoint";
  write_checkpoint(ckpt_dir, fit_result.best_params, meta);

  Checkpoint ckpt;
  ckpt.params = fit_result.best_params;
  ckpt.meta = meta;
  TrainOutcome out;
  out.checkpoint_dir = ckpt_dir;
  out.reports = eval_reports(ckpt, corpus, {"val", "test"});
  write_metrics_json(run_dir / "metrics.json", out.reports);
  write_metrics_csv(run_dir / "metrics.csv", out.reports);
  return out;
}

// Multi-seed driver shared by train and ablate: per-seed run dirs plus a
// median-of-seeds report pair.
std::vector<MetricsReport> train_seeds(const ExperimentConfig& cfg,
                                       const CorpusOnDisk& corpus,
                                       const std::vector<uint64_t>& seeds,
                                       const fs::path& base_dir) {
  if (seeds.size() == 1) {
    ExperimentConfig one = cfg;
    one.hp.seed = seeds.front();
    return train_once(one, corpus, base_dir, false).reports;
  }
  std::vector<std::vector<MetricsReport>> per_seed;
  for (uint64_t s : seeds) {
    ExperimentConfig one = cfg;
    one.hp.seed = s;
    std::cout << "== seed " << s << " ==\n";
    per_seed.push_back(
        train_once(one, corpus, base_dir / ("seed_" + std::to_string(s)), false)
            .reports);
  }
  std::vector<MetricsReport> medians;
  for (size_t p = 0; p < per_seed.front().size(); ++p) {
    std::vector<MetricsReport> slice;
    for (const auto& runs : per_seed) slice.push_back(runs[p]);
    medians.push_back(median_report(slice));
  }
  write_metrics_json(base_dir / "metrics_median.json", medians);
  write_metrics_csv(base_dir / "metrics_median.csv", medians);
  return medians;
}

int run_prepare(const ExperimentConfig& cfg) {
  if (cfg.input.empty())
    throw UsageError("prepare needs data.input in the config");
  if (!fs::exists(cfg.input))
    throw UsageError("input file does not exist: " + cfg.input);
  std::ifstream in(cfg.input);
  if (!in) throw UsageError("cannot read input file: " + cfg.input);
  IngestReport ingest = ingest_events(
      in, {{cfg.domain_x, Domain::X}, {cfg.domain_y, Domain::Y}});
  std::cout << "events: " << ingest.events.size() << "  rejected lines: "
            << ingest.rejected.size() << '\n';
  CorpusStats stats;
  auto [vocab, seqs] =
      build_corpus(ingest.events, cfg.min_interactions, cfg.min_domain_len, &stats);
  DatasetSplit split = make_splits(seqs, cfg.hp.seed);
  write_corpus_artifacts(out_root(cfg), vocab, split, stats);
  return 0;
}

int run_synth(const ExperimentConfig& cfg) {
  if (cfg.synth.n_users <= 0 || cfg.synth.n_items_per_domain <= 0)
    throw UsageError("synth needs synth.n_users and synth.n_items_per_domain");
  std::vector<InteractionEvent> events;
  try {
    events = generate_synthetic(cfg.synth);
  } catch (const FatalError& e) {
    throw UsageError(e.what());
  }
  CorpusStats stats;
  // The generator already emits protocol-shaped sequences; frequency
  // thresholds are an ingestion concern and would wipe desk-scale corpora.
  auto [vocab, seqs] = build_corpus(events, 1, 1, &stats);
  DatasetSplit split = make_splits(seqs, cfg.synth.seed);
  write_corpus_artifacts(out_root(cfg), vocab, split, stats);
  return 0;
}

int run_train(const ExperimentConfig& cfg, const std::string& seeds_csv,
              const std::string& variant) {
  ExperimentConfig run_cfg = cfg;
  if (!variant.empty()) run_cfg.hp = apply_variant(run_cfg.hp, variant);
  const fs::path root = out_root(run_cfg);
  CorpusOnDisk corpus = load_corpus(root);
  std::vector<uint64_t> seeds =
      seeds_csv.empty() ? std::vector<uint64_t>{run_cfg.hp.seed}
                        : parse_seeds(seeds_csv);
  std::vector<MetricsReport> reports = train_seeds(run_cfg, corpus, seeds, root);
  print_reports(reports);
  return 0;
}

int run_eval(const ExperimentConfig& cfg, const std::string& checkpoint,
             const std::string& partition) {
  const fs::path root = out_root(cfg);
  const fs::path ckpt_dir =
      checkpoint.empty() ? root / "checkpoint" : fs::path(checkpoint);
  if (!fs::exists(ckpt_dir / "manifest.json"))
    throw UsageError("no checkpoint at " + ckpt_dir.string());
  CorpusOnDisk corpus = load_corpus(root);
  Checkpoint ckpt = read_checkpoint(ckpt_dir);
  std::vector<std::string> partitions;
  if (partition == "both")
    partitions = {"val", "test"};
  else if (partition == "val" || partition == "test")
    partitions = {partition};
  else
    throw UsageError("--partition must be val, test, or both");
  std::vector<MetricsReport> reports = eval_reports(ckpt, corpus, partitions);
  write_metrics_json(root / "metrics.json", reports);
  write_metrics_csv(root / "metrics.csv", reports);
  print_reports(reports);
  return 0;
}

int run_probe(const ExperimentConfig& cfg, const std::string& checkpoint,
              const std::string& group, double coefficient) {
  const fs::path root = out_root(cfg);
  const fs::path ckpt_dir =
      checkpoint.empty() ? root / "checkpoint" : fs::path(checkpoint);
  if (!fs::exists(ckpt_dir / "manifest.json"))
    throw UsageError("no checkpoint at " + ckpt_dir.string());
  ProbeSpec spec = parse_group(group, coefficient);
  CorpusOnDisk corpus = load_corpus(root);
  Checkpoint ckpt = read_checkpoint(ckpt_dir);

  EvalTables tables;
  if (ckpt.tables.has_value()) {
    tables = *ckpt.tables;
  } else {
    TrainGraphs graphs = build_graphs(corpus.split.train, corpus.vocab,
                                      ckpt.meta.hp.cooccur_window);
    tables = eval_tables(ckpt.params, graphs, ckpt.meta.hp);
  }
  const int rank =
      static_cast<int>(std::min(tables.mixed.rows(), tables.mixed.cols()));
  if (spec.group_hi > rank)
    throw UsageError("--group reaches " + std::to_string(spec.group_hi) +
                     " but the embedding table has rank at most " +
                     std::to_string(rank));

  const Vec pre = singular_values(tables.mixed);
  tables.mixed = probe_spectrum(tables.mixed, spec);
  // Post column stays index-aligned with pre (the probed matrix's spectrum is
  // the same multiset with the group scaled; re-sorting would interleave).
  Vec post = pre;
  for (int k = spec.group_lo; k <= spec.group_hi && k <= post.size(); ++k)
    post(k - 1) *= spec.coefficient;

  CheckpointMeta meta = ckpt.meta;
  meta.propagated = true;
  const fs::path probe_dir = root / "probe";
  write_checkpoint(probe_dir, ckpt.params, meta, &tables);
  write_spectrum_csv(probe_dir / "spectrum.csv", pre, post);
  std::cout << "probed checkpoint: " << probe_dir.string() << '\n';
  return 0;
}

int run_ablate(const ExperimentConfig& cfg, const std::string& variants_csv,
               const std::string& seeds_csv) {
  const fs::path root = out_root(cfg);
  CorpusOnDisk corpus = load_corpus(root);
  std::vector<uint64_t> seeds =
      seeds_csv.empty() ? std::vector<uint64_t>{cfg.hp.seed}
                        : parse_seeds(seeds_csv);
  std::vector<std::string> variants;
  {
    std::istringstream in(variants_csv);
    std::string tok;
    while (std::getline(in, tok, ','))
      if (!tok.empty()) variants.push_back(tok);
  }
  if (variants.empty()) throw UsageError("--variants needs at least one letter");

  std::ofstream summary(root / "ablation_summary.csv");
  summary.precision(17);
  summary << "variant,partition,mean_mrr,mrr_x,mrr_y\n";
  for (const std::string& v : variants) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.hp = apply_variant(run_cfg.hp, v);
    std::cout << "=== variant " << v << " ===\n";
    std::vector<MetricsReport> reports =
        train_seeds(run_cfg, corpus, seeds, root / ("ablate_" + v));
    print_reports(reports);
    for (const auto& r : reports)
      summary << v << ',' << r.partition << ',' << r.mean_mrr() << ',' << r.x.mrr
              << ',' << r.y.mrr << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-domain sequential recommender: prepare, train, evaluate,"
               " probe"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<uint64_t> seed;
  app.add_option("--config", config_path, "JSON config file")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "output directory (overrides config out_dir)");
  app.add_option("--seed", seed, "seed override");

  auto* prepare = app.add_subcommand("prepare", "ingest a raw event file");
  auto* synth = app.add_subcommand("synth", "generate a planted synthetic corpus");
  auto* train = app.add_subcommand("train", "fit on the prepared corpus");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  auto* probe = app.add_subcommand("probe", "rescale a singular-value group");
  auto* ablate = app.add_subcommand("ablate", "run ablation variants");

  std::string seeds_csv, ablate_variant;
  train->add_option("--seeds", seeds_csv,
                    "comma list; runs every seed and writes median reports");
  train->add_option("--ablate", ablate_variant,
                    "apply one ablation variant (B..G or 'all')");

  std::string eval_checkpoint, eval_partition = "both";
  eval->add_option("--checkpoint", eval_checkpoint, "checkpoint directory");
  eval->add_option("--partition", eval_partition, "val, test, or both");

  std::string probe_checkpoint, probe_group = "1-5";
  double probe_coefficient = 1.0;
  probe->add_option("--checkpoint", probe_checkpoint, "checkpoint directory");
  probe->add_option("--group", probe_group, "singular-value group, k or lo-hi");
  probe->add_option("--coefficient", probe_coefficient, "scale factor");

  std::string ablate_variants = "B,C,D,E,F,G", ablate_seeds;
  ablate->add_option("--variants", ablate_variants, "comma list of letters B..G");
  ablate->add_option("--seeds", ablate_seeds, "comma list of seeds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    ExperimentConfig cfg = load_config(config_path);
    apply_overrides(cfg, out_dir, seed);
    if (prepare->parsed()) return run_prepare(cfg);
    if (synth->parsed()) return run_synth(cfg);
    if (train->parsed()) return run_train(cfg, seeds_csv, ablate_variant);
    if (eval->parsed()) return run_eval(cfg, eval_checkpoint, eval_partition);
    if (probe->parsed())
      return run_probe(cfg, probe_checkpoint, probe_group, probe_coefficient);
    if (ablate->parsed()) return run_ablate(cfg, ablate_variants, ablate_seeds);
    std::cerr << "no subcommand selected\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const FatalError& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return 3;
  }
}
