#include "cdsr/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <string>

namespace cdsr {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& context,
                std::initializer_list<const char*> allowed) {
  CDSR_CHECK(obj.is_object(), "config section '" + context + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (ok.count(key) == 0)
      fail("unknown config key '" + key + "' in section '" + context + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    fail("config key '" + std::string(key) + "': " + e.what());
  }
}

void read_encoder(const json& obj, const char* key, EncoderKind& out) {
  if (!obj.contains(key)) return;
  std::string name;
  read(obj, key, name);
  out = encoder_kind_parse(name);
}

}  // namespace

json hyperparams_to_json(const HyperParams& hp) {
  json model = {{"d", hp.d},
                {"n_window", hp.n_window},
                {"layers", hp.layers},
                {"tau", hp.tau},
                {"alpha", hp.alpha},
                {"encoder", encoder_kind_name(hp.encoder)},
                {"n_blocks", hp.n_blocks},
                {"n_heads", hp.n_heads},
                {"dropout", hp.dropout}};
  json train = {{"batch", hp.batch},
                {"lr", hp.lr},
                {"max_epochs", hp.max_epochs},
                {"patience", hp.patience},
                {"lambda1", hp.lambda1},
                {"lambda2", hp.lambda2},
                {"n_anneal", hp.n_anneal},
                {"seed", hp.seed}};
  json graph = {{"window", hp.cooccur_window}};
  json ablation = {{"no_generation", hp.ablation.no_generation},
                   {"std_normal_noise", hp.ablation.std_normal_noise},
                   {"no_alignment", hp.ablation.no_alignment},
                   {"no_asf", hp.ablation.no_asf},
                   {"no_annealing", hp.ablation.no_annealing}};
  return json{{"model", model}, {"train", train}, {"graph", graph},
              {"ablation", ablation}};
}

HyperParams hyperparams_from_json(const json& doc) {
  HyperParams hp;
  check_keys(doc, "hyperparameters", {"model", "train", "graph", "ablation"});
  if (doc.contains("model")) {
    const json& m = doc.at("model");
    check_keys(m, "model",
               {"d", "n_window", "layers", "tau", "alpha", "encoder", "n_blocks",
                "n_heads", "dropout"});
    read(m, "d", hp.d);
    read(m, "n_window", hp.n_window);
    read(m, "layers", hp.layers);
    read(m, "tau", hp.tau);
    read(m, "alpha", hp.alpha);
    read_encoder(m, "encoder", hp.encoder);
    read(m, "n_blocks", hp.n_blocks);
    read(m, "n_heads", hp.n_heads);
    read(m, "dropout", hp.dropout);
  }
  if (doc.contains("train")) {
    const json& t = doc.at("train");
    check_keys(t, "train",
               {"batch", "lr", "max_epochs", "patience", "lambda1", "lambda2",
                "n_anneal", "seed"});
    read(t, "batch", hp.batch);
    read(t, "lr", hp.lr);
    read(t, "max_epochs", hp.max_epochs);
    read(t, "patience", hp.patience);
    read(t, "lambda1", hp.lambda1);
    read(t, "lambda2", hp.lambda2);
    read(t, "n_anneal", hp.n_anneal);
    read(t, "seed", hp.seed);
  }
  if (doc.contains("graph")) {
    const json& g = doc.at("graph");
    check_keys(g, "graph", {"window"});
    read(g, "window", hp.cooccur_window);
  }
  if (doc.contains("ablation")) {
    const json& a = doc.at("ablation");
    check_keys(a, "ablation",
               {"no_generation", "std_normal_noise", "no_alignment", "no_asf",
                "no_annealing"});
    read(a, "no_generation", hp.ablation.no_generation);
    read(a, "std_normal_noise", hp.ablation.std_normal_noise);
    read(a, "no_alignment", hp.ablation.no_alignment);
    read(a, "no_asf", hp.ablation.no_asf);
    read(a, "no_annealing", hp.ablation.no_annealing);
  }
  return hp;
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig cfg;
  check_keys(doc, "config",
             {"data", "synth", "model", "train", "graph", "ablation", "out_dir"});
  if (doc.contains("data")) {
    const json& d = doc.at("data");
    check_keys(d, "data",
               {"input", "domain_x", "domain_y", "min_interactions",
                "min_domain_len"});
    read(d, "input", cfg.input);
    read(d, "domain_x", cfg.domain_x);
    read(d, "domain_y", cfg.domain_y);
    read(d, "min_interactions", cfg.min_interactions);
    read(d, "min_domain_len", cfg.min_domain_len);
  }
  if (doc.contains("synth")) {
    const json& s = doc.at("synth");
    check_keys(s, "synth",
               {"n_users", "n_items_per_domain", "n_clusters", "transfer_strength",
                "seq_len_min", "seq_len_max", "seed"});
    read(s, "n_users", cfg.synth.n_users);
    read(s, "n_items_per_domain", cfg.synth.n_items_per_domain);
    read(s, "n_clusters", cfg.synth.n_clusters);
    read(s, "transfer_strength", cfg.synth.transfer_strength);
    read(s, "seq_len_min", cfg.synth.seq_len_min);
    read(s, "seq_len_max", cfg.synth.seq_len_max);
    read(s, "seed", cfg.synth.seed);
  }
  json hp_doc = json::object();
  for (const char* key : {"model", "train", "graph", "ablation"})
    if (doc.contains(key)) hp_doc[key] = doc.at(key);
  cfg.hp = hyperparams_from_json(hp_doc);
  read(doc, "out_dir", cfg.out_dir);
  if (!doc.contains("synth") || !doc.at("synth").contains("seed"))
    cfg.synth.seed = cfg.hp.seed;  // one seed steers the whole run by default
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail("config file " + path + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

json config_to_json(const ExperimentConfig& cfg) {
  json doc = hyperparams_to_json(cfg.hp);
  doc["data"] = {{"input", cfg.input},
                 {"domain_x", cfg.domain_x},
                 {"domain_y", cfg.domain_y},
                 {"min_interactions", cfg.min_interactions},
                 {"min_domain_len", cfg.min_domain_len}};
  doc["synth"] = {{"n_users", cfg.synth.n_users},
                  {"n_items_per_domain", cfg.synth.n_items_per_domain},
                  {"n_clusters", cfg.synth.n_clusters},
                  {"transfer_strength", cfg.synth.transfer_strength},
                  {"seq_len_min", cfg.synth.seq_len_min},
                  {"seq_len_max", cfg.synth.seq_len_max},
                  {"seed", cfg.synth.seed}};
  doc["out_dir"] = cfg.out_dir;
  return doc;
}

}  // namespace cdsr
