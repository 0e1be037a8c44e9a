#pragma once

#include <utility>

#include "copyseq/encoder.hpp"
#include "copyseq/tensor.hpp"

namespace copyseq {

// One-hidden-layer scorer eta(s, h) = va' tanh(Wa s + Ua h + bias).
struct AttentionParams {
  Tensor wa;    // [d_s x d_att]
  Tensor ua;    // [2 d_h x d_att]
  Tensor va;    // [d_att x 1]
  Tensor bias;  // [1 x d_att]

  std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix) const;
};

AttentionParams make_attention_params(std::size_t d_s, std::size_t mem_width, std::size_t d_att, Rng& rng,
                                      double init_range = 0.08);

// Memory-side projection Ua h, shared by every decoding step of a sequence.
struct AttentionContext {
  Tensor mem_proj;  // [(B*T) x d_att]
};

AttentionContext make_attention_context(Graph& g, const AttentionParams& p, const Memory& mem);

struct AttentiveRead {
  Tensor context;  // c_t [B x 2 d_h]
  Tensor alpha;    // [B x T], zero at masked positions, rows sum to 1
};

AttentiveRead attentive_read(Graph& g, const AttentionParams& p, const AttentionContext& ctx,
                             const Memory& mem, const Tensor& s_prev);

// Convenience form that rebuilds the context each call.
AttentiveRead attentive_read(Graph& g, const AttentionParams& p, const Memory& mem, const Tensor& s_prev);

}  // namespace copyseq
