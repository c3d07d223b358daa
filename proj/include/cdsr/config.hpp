#pragma once

#include "cdsr/corpus.hpp"
#include "cdsr/params.hpp"

#include <json.hpp>

#include <string>

namespace cdsr {

// Everything a run needs, assembled from (defaults <- config file <- flags).
struct ExperimentConfig {
  // ingestion (prepare)
  std::string input;  // raw tab-separated event file
  std::string domain_x = "X";
  std::string domain_y = "Y";
  int min_interactions = 10;
  int min_domain_len = 3;

  // synthetic corpus (synth)
  SyntheticSpec synth;

  HyperParams hp;

  std::string out_dir = "out";
};

// Strict parse: unknown keys anywhere in the document are fatal, known keys
// overwrite the defaults baked into ExperimentConfig/HyperParams.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config_file(const std::string& path);

nlohmann::json config_to_json(const ExperimentConfig& cfg);

// The hyperparameter block alone (model/train/graph/ablation sections), used
// both by config files and by checkpoint manifests.
nlohmann::json hyperparams_to_json(const HyperParams& hp);
HyperParams hyperparams_from_json(const nlohmann::json& doc);

}  // namespace cdsr
