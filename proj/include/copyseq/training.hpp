#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "copyseq/copy_decoder.hpp"
#include "copyseq/model.hpp"
#include "copyseq/synthdata.hpp"

namespace copyseq {

// Gold targets arranged for teacher forcing: labels with EOS appended, the
// shifted inputs fed to the decoder (BOS first), and per-step 0/1 masks. Rows
// past their end carry EOS fillers under a zero mask.
struct TargetBatch {
  std::vector<std::vector<int>> labels;  // [steps][batch]
  std::vector<std::vector<int>> inputs;  // [steps][batch]
  std::vector<Tensor> mask;              // [steps] of [batch x 1]
  std::size_t steps = 0, batch = 0;
};

// ConfigError when any target exceeds max_unroll.
TargetBatch make_target_batch(const std::vector<std::vector<int>>& target_ids, std::size_t max_unroll);

// L = -(1/batch) * sum_instances sum_steps log p(gold); masked steps excluded.
Tensor nll_loss(Graph& g, const std::vector<Tensor>& step_probs, const TargetBatch& targets);
Tensor nll_loss(Graph& g, const std::vector<MixtureOutput>& steps, const TargetBatch& targets);

// Teacher-forced forward pass for any model kind; step probs over the
// extended space (CopyNet) or the base space (baselines).
std::vector<Tensor> forward_teacher(Graph& g, const Model& model, const BatchSource& src,
                                    const TargetBatch& targets);

// Labels in the id space the model predicts over.
std::vector<std::vector<int>> map_targets_for_model(const Model& model, const Vocabulary& vocab,
                                                    const BatchSource& src,
                                                    const std::vector<const std::vector<std::string>*>& targets);

// Scales all gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(const std::vector<std::pair<std::string, Tensor>>& params, double max_norm);

class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  // One update from the accumulated gradients; clears them afterwards.
  void step();

  std::uint64_t steps_taken() const { return t_; }
  void set_steps_taken(std::uint64_t t) { t_ = t; }
  // first/second moments as named tensors (adam.m.<param>, adam.v.<param>)
  std::vector<std::pair<std::string, Tensor>> state() const;

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double lr = 1e-3;
  double clip_norm = 5.0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t seed = 1;
  std::size_t max_target_len = 128;
  std::size_t beam_dev = 1;  // greedy dev scoring keeps epochs cheap
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_exact_match = 0.0;
};

struct TrainResult {
  Model best;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
  double best_dev_em = 0.0;
  std::size_t epochs_run = 0;
};

struct TrainOptions {
  std::ostream* log = nullptr;
  std::string out_dir;      // writes last.ckpt / best.ckpt / metrics.tsv when set
  std::string resume_from;  // last.ckpt of an interrupted run
  std::size_t dev_threads = 1;
};

// Deterministic given the seed: fixed shuffle order, single-threaded
// accumulation. Early stops on dev exact-match (patience epochs without
// improvement, or a perfect score). Throws Error when the loss diverges.
TrainResult train(Model& model, const TrainConfig& cfg, const Vocabulary& vocab,
                  const std::vector<Instance>& train_set, const std::vector<Instance>& dev_set,
                  const TrainOptions& opts = {});

}  // namespace copyseq
