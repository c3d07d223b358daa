#include "cdsr/serialize.hpp"

#include "cdsr/config.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts need swaps");

namespace cdsr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint32_t kTensorVersion = 1;
constexpr int kManifestVersion = 1;

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = {}) {
  std::ofstream out(path, mode);
  if (!out) fail("cannot write file: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = {}) {
  std::ifstream in(path, mode);
  if (!in) fail("cannot open file: " + path.string());
  return in;
}

std::string token_of(Domain d, int32_t local) {
  return std::string(1, domain_letter(d)) + std::to_string(local);
}

ItemTok parse_token(const std::string& tok, const DomainVocab& vocab,
                    const std::string& where) {
  if (tok.size() < 2 || (tok[0] != 'X' && tok[0] != 'Y'))
    fail("bad item token '" + tok + "' in " + where);
  ItemTok t;
  t.dom = tok[0] == 'X' ? Domain::X : Domain::Y;
  try {
    t.local = std::stoi(tok.substr(1));
  } catch (const std::exception&) {
    fail("bad item token '" + tok + "' in " + where);
  }
  if (t.local < 0 || t.local >= vocab.size(t.dom))
    fail("item token '" + tok + "' outside the vocabulary in " + where);
  return t;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& in, const std::string& where) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) fail("truncated tensor file while reading " + where);
  return v;
}

json domain_metrics_to_json(const DomainMetrics& m) {
  return json{{"mrr", m.mrr},         {"ndcg10", m.ndcg10},
              {"ndcg20", m.ndcg20},   {"recall10", m.recall10},
              {"recall20", m.recall20}, {"n_instances", m.n_instances}};
}

}  // namespace

// --------------------------------------------------------------------------
// corpus directory
// --------------------------------------------------------------------------

void write_corpus_dir(const fs::path& dir, const DomainVocab& vocab,
                      const DatasetSplit& split, const CorpusStats* stats) {
  fs::create_directories(dir);

  auto vout = open_out(dir / "vocab.tsv");
  for (Domain d : {Domain::X, Domain::Y})
    for (int32_t i = 0; i < vocab.size(d); ++i)
      vout << domain_letter(d) << '\t' << i << '\t' << vocab.item_string(d, i)
           << '\n';

  auto tout = open_out(dir / "train.tsv");
  for (const auto& seq : split.train) {
    tout << seq.user_id << '\t';
    for (size_t i = 0; i < seq.mixed.size(); ++i) {
      if (i > 0) tout << ' ';
      tout << token_of(seq.mixed[i].dom, seq.mixed[i].local);
    }
    tout << '\n';
  }

  auto eout = open_out(dir / "eval.tsv");
  for (const auto& inst : split.eval_instances) {
    eout << inst.user_id << '\t' << domain_letter(inst.domain) << '\t'
         << (inst.partition == Partition::Val ? "val" : "test") << '\t'
         << inst.target_local << '\t';
    for (size_t i = 0; i < inst.prefix.size(); ++i) {
      if (i > 0) eout << ' ';
      eout << token_of(inst.prefix[i].dom, inst.prefix[i].local);
    }
    eout << '\n';
  }

  if (stats != nullptr) {
    auto sout = open_out(dir / "stats.txt");
    sout << format_stats(*stats, split);
  }
}

CorpusOnDisk read_corpus_dir(const fs::path& dir) {
  CorpusOnDisk out;

  {
    auto in = open_in(dir / "vocab.tsv");
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto f = split_fields(line, '\t');
      if (f.size() != 3 || f[0].size() != 1 || (f[0][0] != 'X' && f[0][0] != 'Y'))
        fail("vocab.tsv line " + std::to_string(lineno) + " is malformed");
      Domain d = f[0][0] == 'X' ? Domain::X : Domain::Y;
      int32_t expect = 0;
      try {
        expect = std::stoi(f[1]);
      } catch (const std::exception&) {
        fail("vocab.tsv line " + std::to_string(lineno) + " has a bad index");
      }
      int32_t got = out.vocab.add(d, f[2]);
      if (got != expect)
        fail("vocab.tsv line " + std::to_string(lineno) +
             ": indices out of order (duplicate item?)");
    }
  }

  {
    auto in = open_in(dir / "train.tsv");
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto f = split_fields(line, '\t');
      if (f.size() != 2)
        fail("train.tsv line " + std::to_string(lineno) + " is malformed");
      CrossDomainSequence seq;
      seq.user_id = f[0];
      std::istringstream toks(f[1]);
      std::string tok;
      while (toks >> tok)
        seq.mixed.push_back(
            parse_token(tok, out.vocab, "train.tsv line " + std::to_string(lineno)));
      out.split.train.push_back(std::move(seq));
    }
  }

  {
    auto in = open_in(dir / "eval.tsv");
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto f = split_fields(line, '\t');
      const std::string where = "eval.tsv line " + std::to_string(lineno);
      if (f.size() != 5 || f[1].size() != 1) fail(where + " is malformed");
      EvalInstance inst;
      inst.user_id = f[0];
      if (f[1][0] != 'X' && f[1][0] != 'Y') fail(where + " has a bad domain");
      inst.domain = f[1][0] == 'X' ? Domain::X : Domain::Y;
      if (f[2] == "val")
        inst.partition = Partition::Val;
      else if (f[2] == "test")
        inst.partition = Partition::Test;
      else
        fail(where + " has a bad partition tag");
      try {
        inst.target_local = std::stoi(f[3]);
      } catch (const std::exception&) {
        fail(where + " has a bad target index");
      }
      if (inst.target_local < 0 || inst.target_local >= out.vocab.size(inst.domain))
        fail(where + " has a target outside the vocabulary");
      std::istringstream toks(f[4]);
      std::string tok;
      while (toks >> tok) inst.prefix.push_back(parse_token(tok, out.vocab, where));
      out.split.eval_instances.push_back(std::move(inst));
    }
  }

  return out;
}

std::string format_stats(const CorpusStats& stats, const DatasetSplit& split) {
  int64_t val_x = 0, val_y = 0, test_x = 0, test_y = 0;
  for (const auto& inst : split.eval_instances) {
    int64_t& slot = inst.partition == Partition::Val
                        ? (inst.domain == Domain::X ? val_x : val_y)
                        : (inst.domain == Domain::X ? test_x : test_y);
    slot += 1;
  }
  std::ostringstream out;
  out << "users: " << stats.retained_users << '\n'
      << "items_x: " << stats.items_x << '\n'
      << "items_y: " << stats.items_y << '\n'
      << "events: " << stats.retained_events << '\n'
      << "avg_mixed_len: " << stats.avg_mixed_len << '\n'
      << "train_sequences: " << split.train.size() << '\n'
      << "val_instances_x: " << val_x << '\n'
      << "val_instances_y: " << val_y << '\n'
      << "test_instances_x: " << test_x << '\n'
      << "test_instances_y: " << test_y << '\n';
  return out.str();
}

// --------------------------------------------------------------------------
// graph edge list
// --------------------------------------------------------------------------

void write_graph(const fs::path& path, const SparseAdjacency& adj) {
  auto out = open_out(path);
  out << "n=" << adj.n << " norm="
      << (adj.normalization == SparseAdjacency::Normalization::Symmetric
              ? "symmetric"
              : "none")
      << '\n';
  out.precision(17);
  for (const auto& e : adj.entries)
    out << e.row << '\t' << e.col << '\t' << e.weight << '\n';
}

SparseAdjacency read_graph(const fs::path& path) {
  auto in = open_in(path);
  std::string header;
  if (!std::getline(in, header)) fail("graph file " + path.string() + " is empty");
  SparseAdjacency adj;
  {
    std::istringstream hs(header);
    std::string n_field, norm_field;
    hs >> n_field >> norm_field;
    if (n_field.rfind("n=", 0) != 0 || norm_field.rfind("norm=", 0) != 0)
      fail("graph file " + path.string() + " has a bad header: " + header);
    try {
      adj.n = std::stoi(n_field.substr(2));
    } catch (const std::exception&) {
      fail("graph file " + path.string() + " has a bad node count");
    }
    const std::string scheme = norm_field.substr(5);
    if (scheme == "none")
      adj.normalization = SparseAdjacency::Normalization::None;
    else if (scheme == "symmetric")
      adj.normalization = SparseAdjacency::Normalization::Symmetric;
    else
      fail("graph file " + path.string() + " has unknown norm '" + scheme + "'");
  }
  std::string line;
  int64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    SparseAdjacency::Entry e;
    if (!(ls >> e.row >> e.col >> e.weight))
      fail("graph file " + path.string() + " line " + std::to_string(lineno) +
           " is malformed");
    if (e.row < 0 || e.row >= adj.n || e.col < 0 || e.col >= adj.n)
      fail("graph file " + path.string() + " line " + std::to_string(lineno) +
           " is out of bounds");
    adj.entries.push_back(e);
  }
  return adj;
}

// --------------------------------------------------------------------------
// tensors
// --------------------------------------------------------------------------

void write_tensors(const fs::path& path, const std::vector<NamedTensor>& tensors) {
  auto out = open_out(path, std::ios::binary);
  out.write("CDSR", 4);
  write_u32(out, kTensorVersion);
  write_u32(out, static_cast<uint32_t>(tensors.size()));
  std::vector<float> buf;
  for (const auto& t : tensors) {
    write_u32(out, static_cast<uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_u32(out, static_cast<uint32_t>(t.value.rows()));
    write_u32(out, static_cast<uint32_t>(t.value.cols()));
    buf.resize(static_cast<size_t>(t.value.size()));
    size_t k = 0;
    for (int i = 0; i < t.value.rows(); ++i)
      for (int j = 0; j < t.value.cols(); ++j)
        buf[k++] = static_cast<float>(t.value(i, j));
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) fail("failed writing tensor file: " + path.string());
}

std::vector<NamedTensor> read_tensors(const fs::path& path) {
  auto in = open_in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CDSR", 4) != 0)
    fail("not a tensor file: " + path.string());
  const uint32_t version = read_u32(in, "version");
  if (version != kTensorVersion)
    fail("tensor file " + path.string() + " has unsupported version " +
         std::to_string(version));
  const uint32_t count = read_u32(in, "tensor count");
  std::vector<NamedTensor> out;
  out.reserve(count);
  std::vector<float> buf;
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t name_len = read_u32(in, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) fail("truncated tensor file while reading a name");
    const uint32_t rows = read_u32(in, name + " rows");
    const uint32_t cols = read_u32(in, name + " cols");
    buf.resize(static_cast<size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) fail("truncated tensor file while reading " + name);
    Mat m(rows, cols);
    size_t k = 0;
    for (uint32_t i = 0; i < rows; ++i)
      for (uint32_t j = 0; j < cols; ++j) m(i, j) = static_cast<double>(buf[k++]);
    out.push_back({std::move(name), std::move(m)});
  }
  return out;
}

// --------------------------------------------------------------------------
// checkpoints
// --------------------------------------------------------------------------

void write_checkpoint(const fs::path& dir, const ParameterSet& params,
                      const CheckpointMeta& meta, const EvalTables* tables) {
  CDSR_CHECK(meta.propagated == (tables != nullptr),
             "propagated checkpoints carry tables; raw ones must not");
  fs::create_directories(dir);

  json manifest;
  manifest["format_version"] = kManifestVersion;
  manifest["hyperparameters"] = hyperparams_to_json(meta.hp);
  manifest["x_items"] = params.x_items;
  manifest["y_items"] = params.y_items;
  manifest["epoch"] = meta.epoch;
  manifest["tables"] = meta.propagated ? "propagated" : "raw";
  if (meta.val_mrr >= 0.0) manifest["metrics"] = {{"val_mrr", meta.val_mrr}};
  auto mout = open_out(dir / "manifest.json");
  mout << manifest.dump(2) << '\n';

  std::vector<NamedTensor> tensors;
  params.visit(
      [&](const std::string& name, const Mat& mat) { tensors.push_back({name, mat}); });
  if (tables != nullptr) {
    tensors.push_back({"table.mixed", tables->mixed});
    tensors.push_back({"table.x", tables->x});
    tensors.push_back({"table.y", tables->y});
  }
  write_tensors(dir / "tensors.bin", tensors);
}

Checkpoint read_checkpoint(const fs::path& dir) {
  auto min = open_in(dir / "manifest.json");
  json manifest;
  try {
    min >> manifest;
  } catch (const json::exception& e) {
    fail("checkpoint manifest " + (dir / "manifest.json").string() +
         " is not valid JSON: " + e.what());
  }

  Checkpoint out;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kManifestVersion)
      fail("checkpoint " + dir.string() + " has unsupported format version " +
           std::to_string(version));
    out.meta.hp = hyperparams_from_json(manifest.at("hyperparameters"));
    out.meta.epoch = manifest.at("epoch").get<int>();
    const std::string tables = manifest.at("tables").get<std::string>();
    if (tables != "raw" && tables != "propagated")
      fail("checkpoint " + dir.string() + " has unknown table flavour '" + tables +
           "'");
    out.meta.propagated = tables == "propagated";
    if (manifest.contains("metrics"))
      out.meta.val_mrr = manifest.at("metrics").at("val_mrr").get<double>();
    out.params.init(out.meta.hp, manifest.at("x_items").get<int>(),
                    manifest.at("y_items").get<int>());
  } catch (const json::exception& e) {
    fail("checkpoint manifest " + dir.string() + " is missing fields: " + e.what());
  }

  std::map<std::string, Mat> loaded;
  for (auto& t : read_tensors(dir / "tensors.bin"))
    if (!loaded.emplace(t.name, std::move(t.value)).second)
      fail("checkpoint " + dir.string() + " repeats tensor '" + t.name + "'");

  auto take = [&](const std::string& name, Mat& into) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      fail("checkpoint " + dir.string() + " is missing tensor '" + name + "'");
    if (it->second.rows() != into.rows() || it->second.cols() != into.cols())
      fail("checkpoint " + dir.string() + " tensor '" + name +
           "' has the wrong shape");
    into = std::move(it->second);
    loaded.erase(it);
  };

  out.params.visit([&](const std::string& name, Mat& mat) { take(name, mat); });
  if (out.meta.propagated) {
    EvalTables tables;
    tables.mixed.resize(out.params.x_items + out.params.y_items, out.params.d);
    tables.x.resize(out.params.x_items, out.params.d);
    tables.y.resize(out.params.y_items, out.params.d);
    take("table.mixed", tables.mixed);
    take("table.x", tables.x);
    take("table.y", tables.y);
    out.tables = std::move(tables);
  }
  if (!loaded.empty())
    fail("checkpoint " + dir.string() + " has unexpected tensor '" +
         loaded.begin()->first + "'");
  return out;
}

// --------------------------------------------------------------------------
// run artifacts
// --------------------------------------------------------------------------

void write_metrics_json(const fs::path& path,
                        const std::vector<MetricsReport>& reports) {
  json doc;
  for (const auto& r : reports) {
    doc[r.partition] = {{"x", domain_metrics_to_json(r.x)},
                        {"y", domain_metrics_to_json(r.y)},
                        {"mean_mrr", r.mean_mrr()}};
  }
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

void write_metrics_csv(const fs::path& path,
                       const std::vector<MetricsReport>& reports) {
  auto out = open_out(path);
  out.precision(17);
  out << "partition,domain,metric,value\n";
  for (const auto& r : reports) {
    const std::pair<char, const DomainMetrics*> doms[] = {{'X', &r.x}, {'Y', &r.y}};
    for (const auto& [letter, m] : doms) {
      out << r.partition << ',' << letter << ",mrr," << m->mrr << '\n';
      out << r.partition << ',' << letter << ",ndcg10," << m->ndcg10 << '\n';
      out << r.partition << ',' << letter << ",ndcg20," << m->ndcg20 << '\n';
      out << r.partition << ',' << letter << ",recall10," << m->recall10 << '\n';
      out << r.partition << ',' << letter << ",recall20," << m->recall20 << '\n';
      out << r.partition << ',' << letter << ",n_instances," << m->n_instances
          << '\n';
    }
  }
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
  auto out = open_out(path);
  out.precision(17);
  out << "epoch,total,single_x,single_y,gen,cross,align,eta,val_mrr_x,val_mrr_y,"
         "val_mrr\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << r.losses.total << ',' << r.losses.single_x << ','
        << r.losses.single_y << ',' << r.losses.gen << ',' << r.losses.cross << ','
        << r.losses.align << ',' << r.losses.eta << ',' << r.val_mrr_x << ','
        << r.val_mrr_y << ',' << r.val_mrr << '\n';
  }
}

void write_spectrum_csv(const fs::path& path, const Vec& pre, const Vec& post) {
  CDSR_CHECK(pre.size() == post.size(),
             "pre and post spectra must have equal length");
  auto out = open_out(path);
  out.precision(17);
  out << "index,pre,post\n";
  for (Eigen::Index i = 0; i < pre.size(); ++i)
    out << (i + 1) << ',' << pre(i) << ',' << post(i) << '\n';
}

}  // namespace cdsr
