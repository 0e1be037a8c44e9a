#pragma once

#include <utility>
#include <vector>

#include "copyseq/model.hpp"

namespace copyseq {

// Per-sequence machinery for the two comparison systems. EncDec reads a fixed
// context (final forward state || final backward state); RnnSearch shares the
// attentive read with CopyNet.
struct BaselineContext {
  const Memory* mem = nullptr;
  const AttentionParams* attn = nullptr;
  AttentionContext attn_ctx;
  Tensor fixed_context;
  GruRun gru;
  Tensor embedding, w_out;
  bool attentive = false;

  BaselineContext(Graph& g, const Model& model, const Memory& m);
};

// Returns (s_t, probs over V + specials); PAD/BOS carry zero probability so a
// baseline can never emit a token outside V and UNK.
std::pair<Tensor, Tensor> baseline_step(Graph& g, const std::vector<int>& prev_base_ids,
                                        const Tensor& s_prev, const BaselineContext& ctx);

}  // namespace copyseq
