#pragma once

#include <map>
#include <string>

#include "copyseq/model.hpp"

namespace copyseq {

// Optimizer and schedule state needed to resume a run step-for-step.
struct TrainerState {
  std::size_t epoch = 0;  // epochs completed
  std::uint64_t adam_step = 0;
  double best_dev_em = -1.0;
  std::size_t best_epoch = 0;
  std::size_t stale_epochs = 0;
  std::string rng_state;  // mt19937_64 textual state
};

// File layout: versioned text header (config echo, optional trainer block,
// then one line per tensor: name, shape, dtype, byte offset), an "end" line,
// then the little-endian IEEE-754 arrays in header order.
void save_checkpoint(const std::string& path, const Model& model, const TrainerState* trainer = nullptr,
                     const std::vector<std::pair<std::string, Tensor>>* extra = nullptr);

struct LoadedCheckpoint {
  Model model;
  TrainerState trainer;
  bool has_trainer = false;
  std::map<std::string, Tensor> extra;
};

// VersionError on unknown version or on tensors that do not match the
// model's own registry.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace copyseq
