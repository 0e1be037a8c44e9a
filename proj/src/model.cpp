#include "copyseq/model.hpp"

namespace copyseq {

namespace {
const std::string kKindNames[] = {"copynet", "rnnsearch", "encdec"};
}

const std::string& model_kind_name(ModelKind k) { return kKindNames[static_cast<int>(k)]; }

std::optional<ModelKind> parse_model_kind(const std::string& name) {
  for (ModelKind k : {ModelKind::CopyNet, ModelKind::RnnSearch, ModelKind::EncDec})
    if (kKindNames[static_cast<int>(k)] == name) return k;
  return std::nullopt;
}

std::size_t Model::decoder_input_dim() const {
  // embedding + context, plus the selective read for CopyNet
  return cfg.d_e + 2 * cfg.d_h + (cfg.kind == ModelKind::CopyNet ? 2 * cfg.d_h : 0);
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_regular == 0) throw ConfigError("model: vocab_regular must be positive");
  Model m;
  m.cfg = cfg;
  Rng rng(derive_seed(seed, "model-init"));
  const std::size_t base = cfg.base_size();
  m.embedding = Tensor::uniform({base, cfg.d_e}, rng, 0.08, true);
  m.enc_fwd = make_gru_params(cfg.d_e, cfg.d_h, rng);
  m.enc_bwd = make_gru_params(cfg.d_e, cfg.d_h, rng);
  m.w_init = Tensor::uniform({cfg.d_h, cfg.d_s}, rng, 0.08, true);
  if (cfg.kind != ModelKind::EncDec) m.attn = make_attention_params(cfg.d_s, 2 * cfg.d_h, cfg.d_att, rng);
  m.dec = make_gru_params(m.decoder_input_dim(), cfg.d_s, rng);
  m.w_out = Tensor::uniform({cfg.d_s, base}, rng, 0.08, true);
  if (cfg.kind == ModelKind::CopyNet) m.w_copy = Tensor::uniform({2 * cfg.d_h, cfg.d_s}, rng, 0.08, true);
  return m;
}

std::vector<std::pair<std::string, Tensor>> Model::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("emb", embedding);
  for (auto& kv : enc_fwd.named("enc_fwd")) out.push_back(kv);
  for (auto& kv : enc_bwd.named("enc_bwd")) out.push_back(kv);
  out.emplace_back("w_init", w_init);
  if (cfg.kind != ModelKind::EncDec)
    for (auto& kv : attn.named("attn")) out.push_back(kv);
  for (auto& kv : dec.named("dec")) out.push_back(kv);
  out.emplace_back("w_out", w_out);
  if (cfg.kind == ModelKind::CopyNet) out.emplace_back("w_copy", w_copy);
  return out;
}

Memory Model::encode_source(Graph& g, const std::vector<std::vector<int>>& base_ids) const {
  return encode(g, base_ids, embedding, enc_fwd, enc_bwd);
}

Tensor Model::initial_state(Graph& g, const Memory& mem) const {
  std::vector<std::size_t> first(mem.batch, 0);
  Tensor b_first = slice_cols(g, select_block_row(g, mem.states, first, mem.steps), cfg.d_h, cfg.d_h);
  return tanh(g, matmul(g, b_first, w_init));
}

Model Model::clone() const {
  Model copy = *this;
  for (auto& [name, t] : copy.parameters()) {
    (void)name;
    Tensor fresh = Tensor::zeros(t.shape(), true);
    fresh.values() = t.values();
    // rebind the member that shares storage with t
    auto rebind = [&](Tensor& member) {
      if (member.same_storage(t)) member = fresh;
    };
    rebind(copy.embedding);
    for (GruParams* p : {&copy.enc_fwd, &copy.enc_bwd, &copy.dec})
      for (Tensor* w : {&p->wz, &p->uz, &p->bz, &p->wr, &p->ur, &p->br, &p->wh, &p->uh, &p->bh}) rebind(*w);
    rebind(copy.w_init);
    for (Tensor* w : {&copy.attn.wa, &copy.attn.ua, &copy.attn.va, &copy.attn.bias}) rebind(*w);
    rebind(copy.w_out);
    rebind(copy.w_copy);
  }
  return copy;
}

BatchSource make_batch_source(const Vocabulary& vocab,
                              const std::vector<const std::vector<std::string>*>& sources) {
  BatchSource bs;
  bs.base_ids.reserve(sources.size());
  for (const auto* src : sources) {
    ExtendedSource es = build_extended(vocab, *src);
    bs.max_oov = std::max(bs.max_oov, es.ext.oov_symbols.size());
    bs.base_ids.push_back(std::move(es.base_ids));
    bs.ext_ids.push_back(std::move(es.ext_ids));
    bs.exts.push_back(std::move(es.ext));
  }
  return bs;
}

}  // namespace copyseq
