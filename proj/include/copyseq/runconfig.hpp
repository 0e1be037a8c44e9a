#pragma once

#include <string>
#include <vector>

#include "copyseq/model.hpp"
#include "copyseq/synthdata.hpp"
#include "copyseq/training.hpp"

namespace copyseq {

// One JSON document drives a run. Unknown keys are rejected at every level;
// every run writes its resolved configuration beside its outputs.
struct RunConfig {
  ModelConfig model;           // model.vocab_size 0 = use the whole data vocab
  TrainConfig train;
  std::string data_train, data_dev, data_vocab;
  std::string output_dir;
  std::vector<RuleType> rule_types;  // optional instance filter
};

RunConfig parse_run_config_text(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace copyseq
