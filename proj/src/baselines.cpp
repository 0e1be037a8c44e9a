#include "copyseq/baselines.hpp"

namespace copyseq {

BaselineContext::BaselineContext(Graph& g, const Model& model, const Memory& m)
    : mem(&m),
      attn(&model.attn),
      gru(g, model.dec),
      embedding(model.embedding),
      w_out(model.w_out),
      attentive(model.attentive()) {
  if (model.cfg.kind == ModelKind::CopyNet)
    throw ConfigError("baseline_step: model is a copy decoder, not a baseline");
  if (attentive)
    attn_ctx = make_attention_context(g, model.attn, m);
  else
    fixed_context = final_state_context(g, m);
}

std::pair<Tensor, Tensor> baseline_step(Graph& g, const std::vector<int>& prev_base_ids,
                                        const Tensor& s_prev, const BaselineContext& ctx) {
  Tensor e = gather_rows(g, ctx.embedding, prev_base_ids);
  Tensor context =
      ctx.attentive ? attentive_read(g, *ctx.attn, ctx.attn_ctx, *ctx.mem, s_prev).context : ctx.fixed_context;
  Tensor s_t = ctx.gru.step(g, concat_cols(g, {e, context}), s_prev);
  Tensor scores = score_generate(g, s_t, ctx.w_out);
  Tensor mask = Tensor::zeros(scores.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = is_masked_score(scores.data()[i]) ? 0.0 : 1.0;
  Tensor probs = exp(g, masked_log_softmax(g, scores, mask));
  return {s_t, probs};
}

}  // namespace copyseq
