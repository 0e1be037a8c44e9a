#include "copyseq/copy_decoder.hpp"

#include "copyseq/vocab.hpp"

namespace copyseq {

namespace {

// scores with column `j` replaced by the sentinel wherever keep[j] == 0;
// gradient flows only through kept entries.
Tensor mask_with_sentinel(Graph& g, const Tensor& scores, const Tensor& keep) {
  Tensor sentinel = Tensor::zeros(keep.shape());
  for (std::size_t i = 0; i < keep.size(); ++i)
    sentinel.data()[i] = keep.data()[i] != 0.0 ? 0.0 : kMaskedScore;
  return add(g, mul(g, scores, keep), sentinel);
}

}  // namespace

Tensor score_generate(Graph& g, const Tensor& s_t, const Tensor& w_out) {
  Tensor scores = matmul(g, s_t, w_out);
  Tensor keep = Tensor::full({1, w_out.cols()}, 1.0);
  keep.at(0, Vocabulary::kPad) = 0.0;
  keep.at(0, Vocabulary::kBos) = 0.0;
  return mask_with_sentinel(g, scores, keep);
}

CopyScoreContext make_copy_context(Graph& g, const Tensor& w_copy, const Memory& mem) {
  return {tanh(g, matmul(g, mem.states, w_copy))};
}

Tensor score_copy(Graph& g, const CopyScoreContext& ctx, const Memory& mem, const Tensor& s_t) {
  Tensor scores = blockwise_matvec(g, ctx.proj, s_t, mem.steps);
  return mask_with_sentinel(g, scores, mem.mask);
}

Tensor score_copy(Graph& g, const Tensor& w_copy, const Memory& mem, const Tensor& s_t) {
  CopyScoreContext ctx = make_copy_context(g, w_copy, mem);
  return score_copy(g, ctx, mem, s_t);
}

MixtureOutput mix_predict(Graph& g, const Tensor& gen_scores, const Tensor& copy_scores,
                          const std::vector<std::vector<int>>& src_ext_ids, std::size_t extended_size) {
  const std::size_t B = gen_scores.rows(), G = gen_scores.cols(), T = copy_scores.cols();
  if (copy_scores.rows() != B)
    throw DimensionError("mix_predict: generate " + gen_scores.shape_str() + " vs copy " +
                         copy_scores.shape_str());
  if (src_ext_ids.size() != B) throw DimensionError("mix_predict: source id rows do not match batch");
  if (extended_size < G) throw DimensionError("mix_predict: extended size smaller than generate width");

  Tensor concat = concat_cols(g, {gen_scores, copy_scores});
  Tensor mask = Tensor::zeros({B, G + T});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t j = 0; j < G + T; ++j) mask.at(b, j) = is_masked_score(concat.at(b, j)) ? 0.0 : 1.0;

  Tensor probs_concat = exp(g, masked_log_softmax(g, concat, mask));

  std::vector<std::vector<int>> col_map(B, std::vector<int>(G + T, -1));
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t j = 0; j < G; ++j) col_map[b][j] = static_cast<int>(j);
    const auto& ids = src_ext_ids[b];
    if (ids.size() > T) throw DimensionError("mix_predict: source longer than copy score row");
    for (std::size_t t = 0; t < ids.size(); ++t) {
      if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= extended_size)
        throw IndexError("mix_predict: extended id " + std::to_string(ids[t]) + " out of range");
      col_map[b][G + t] = ids[t];
    }
  }

  MixtureOutput out;
  out.probs = scatter_cols(g, probs_concat, col_map, extended_size);
  out.gen_probs = slice_cols(g, probs_concat, 0, G);
  out.copy_by_pos = slice_cols(g, probs_concat, G, T);
  return out;
}

Tensor selective_read(Graph& g, const std::vector<int>& prev_ext_ids, const Tensor& copy_by_pos,
                      const std::vector<std::vector<int>>& src_ext_ids, const Memory& mem) {
  const std::size_t B = mem.batch, T = mem.steps;
  if (prev_ext_ids.size() != B || copy_by_pos.rows() != B || copy_by_pos.cols() != T)
    throw DimensionError("selective_read: batch mismatch");
  Tensor match = Tensor::zeros({B, T});
  for (std::size_t b = 0; b < B; ++b) {
    const auto& ids = src_ext_ids[b];
    for (std::size_t t = 0; t < ids.size() && t < T; ++t)
      if (ids[t] == prev_ext_ids[b]) match.at(b, t) = 1.0;
  }
  Tensor rho = normalize_matched(g, copy_by_pos, match);
  return blockwise_weighted_sum(g, mem.states, rho);
}

CopyDecoderContext::CopyDecoderContext(Graph& g, const Memory& m, const AttentionParams& a,
                                       const Tensor& w_copy, const GruParams& dec, const Tensor& emb,
                                       const Tensor& w_o, const std::vector<std::vector<int>>& ext_ids,
                                       std::size_t ext_size)
    : mem(&m),
      attn(&a),
      attn_ctx(make_attention_context(g, a, m)),
      copy_ctx(make_copy_context(g, w_copy, m)),
      gru(g, dec),
      embedding(emb),
      w_out(w_o),
      src_ext_ids(&ext_ids),
      extended_size(ext_size) {}

std::vector<int> feedback_embedding_ids(const std::vector<int>& prev_ext_ids, std::size_t base_size) {
  std::vector<int> ids(prev_ext_ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    ids[i] = prev_ext_ids[i] < static_cast<int>(base_size) ? prev_ext_ids[i] : Vocabulary::kUnk;
  return ids;
}

DecoderState initial_decoder_state(const Tensor& s0, std::size_t batch, std::size_t steps) {
  return {s0, Tensor::zeros({batch, steps})};
}

std::pair<DecoderState, MixtureOutput> decoder_step(Graph& g, const std::vector<int>& prev_ext_ids,
                                                    const DecoderState& state,
                                                    const CopyDecoderContext& ctx) {
  const Memory& mem = *ctx.mem;
  Tensor e = gather_rows(g, ctx.embedding, feedback_embedding_ids(prev_ext_ids, ctx.embedding.rows()));
  Tensor zeta = selective_read(g, prev_ext_ids, state.copy_by_pos, *ctx.src_ext_ids, mem);
  AttentiveRead read = attentive_read(g, *ctx.attn, ctx.attn_ctx, mem, state.s);
  Tensor input = concat_cols(g, {e, zeta, read.context});
  Tensor s_t = ctx.gru.step(g, input, state.s);
  Tensor gen = score_generate(g, s_t, ctx.w_out);
  Tensor cp = score_copy(g, ctx.copy_ctx, mem, s_t);
  MixtureOutput mix = mix_predict(g, gen, cp, *ctx.src_ext_ids, ctx.extended_size);
  return {DecoderState{s_t, mix.copy_by_pos}, mix};
}

}  // namespace copyseq
