#include "copyseq/attention.hpp"

namespace copyseq {

std::vector<std::pair<std::string, Tensor>> AttentionParams::named(const std::string& prefix) const {
  return {{prefix + ".wa", wa}, {prefix + ".ua", ua}, {prefix + ".va", va}, {prefix + ".bias", bias}};
}

AttentionParams make_attention_params(std::size_t d_s, std::size_t mem_width, std::size_t d_att, Rng& rng,
                                      double init_range) {
  AttentionParams p;
  p.wa = Tensor::uniform({d_s, d_att}, rng, init_range, true);
  p.ua = Tensor::uniform({mem_width, d_att}, rng, init_range, true);
  p.va = Tensor::uniform({d_att, 1}, rng, init_range, true);
  p.bias = Tensor::zeros({1, d_att}, true);
  return p;
}

AttentionContext make_attention_context(Graph& g, const AttentionParams& p, const Memory& mem) {
  return {matmul(g, mem.states, p.ua)};
}

AttentiveRead attentive_read(Graph& g, const AttentionParams& p, const AttentionContext& ctx,
                             const Memory& mem, const Tensor& s_prev) {
  Tensor query = matmul(g, s_prev, p.wa);  // [B x d_att]
  Tensor pre = tanh(g, add(g, block_rowwise_add(g, ctx.mem_proj, query, mem.steps), p.bias));
  Tensor scores = reshape(g, matmul(g, pre, p.va), {mem.batch, mem.steps});
  Tensor alpha = exp(g, masked_log_softmax(g, scores, mem.mask));
  Tensor context = blockwise_weighted_sum(g, mem.states, alpha);
  return {context, alpha};
}

AttentiveRead attentive_read(Graph& g, const AttentionParams& p, const Memory& mem, const Tensor& s_prev) {
  AttentionContext ctx = make_attention_context(g, p, mem);
  return attentive_read(g, p, ctx, mem, s_prev);
}

}  // namespace copyseq
