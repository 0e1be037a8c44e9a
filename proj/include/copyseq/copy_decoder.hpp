#pragma once

#include <utility>
#include <vector>

#include "copyseq/attention.hpp"
#include "copyseq/encoder.hpp"
#include "copyseq/gru.hpp"
#include "copyseq/tensor.hpp"

namespace copyseq {

// Decoder recurrent state plus the cached per-position copy probabilities of
// the previous prediction (Eq. numerators over the shared Z), which feed the
// next selective read. At t=0 the cache is all zero.
struct DecoderState {
  Tensor s;            // [B x d_s]
  Tensor copy_by_pos;  // [B x T]
};

// Normalized output over the extended vocabulary. probs rows sum to 1; ids
// outside V and X hold probability 0 (UNK aside). copy_by_pos is the copy
// slice of the shared softmax; gen_probs the generate slice (kept for
// diagnostics and the structural zero-generate property of OOV slots).
struct MixtureOutput {
  Tensor probs;        // [B x E]
  Tensor copy_by_pos;  // [B x T]
  Tensor gen_probs;    // [B x (N+4)]
};

// Linear generate scores over V + specials; PAD and BOS columns carry the
// masked-score sentinel, EOS stays predictable.
Tensor score_generate(Graph& g, const Tensor& s_t, const Tensor& w_out);

// Memory-side copy projection tanh(H Wc), shared by all steps of a sequence.
struct CopyScoreContext {
  Tensor proj;  // [(B*T) x d_s]
};

CopyScoreContext make_copy_context(Graph& g, const Tensor& w_copy, const Memory& mem);

// psi_c[b,t] = tanh(h_{b,t}' Wc) s_b; masked positions get the sentinel.
Tensor score_copy(Graph& g, const CopyScoreContext& ctx, const Memory& mem, const Tensor& s_t);
Tensor score_copy(Graph& g, const Tensor& w_copy, const Memory& mem, const Tensor& s_t);

// One softmax over [generate || copy] scores (the shared normalization term),
// then per-row scatter of copy probability onto each source token's extended
// id. Tokens in X\V get no generate contribution structurally: they have no
// generate slot, and the UNK share is never added to OOV slots.
MixtureOutput mix_predict(Graph& g, const Tensor& gen_scores, const Tensor& copy_scores,
                          const std::vector<std::vector<int>>& src_ext_ids, std::size_t extended_size);

// zeta(y_{t-1}): copy-probability-weighted sum of memory states at positions
// matching the previously emitted token; zero when y_{t-1} is absent from the
// source.
Tensor selective_read(Graph& g, const std::vector<int>& prev_ext_ids, const Tensor& copy_by_pos,
                      const std::vector<std::vector<int>>& src_ext_ids, const Memory& mem);

// Everything one decoding step needs once per sequence.
struct CopyDecoderContext {
  const Memory* mem = nullptr;
  const AttentionParams* attn = nullptr;
  AttentionContext attn_ctx;
  CopyScoreContext copy_ctx;
  GruRun gru;  // input width d_e + 4 d_h
  Tensor embedding;
  Tensor w_out;
  const std::vector<std::vector<int>>* src_ext_ids = nullptr;
  std::size_t extended_size = 0;

  CopyDecoderContext(Graph& g, const Memory& m, const AttentionParams& a, const Tensor& w_copy,
                     const GruParams& dec, const Tensor& emb, const Tensor& w_o,
                     const std::vector<std::vector<int>>& ext_ids, std::size_t ext_size);
};

// Feedback embedding ids: copied OOV tokens embed as UNK, their location
// information enters through the selective read.
std::vector<int> feedback_embedding_ids(const std::vector<int>& prev_ext_ids, std::size_t base_size);

DecoderState initial_decoder_state(const Tensor& s0, std::size_t batch, std::size_t steps);

std::pair<DecoderState, MixtureOutput> decoder_step(Graph& g, const std::vector<int>& prev_ext_ids,
                                                    const DecoderState& state,
                                                    const CopyDecoderContext& ctx);

}  // namespace copyseq
