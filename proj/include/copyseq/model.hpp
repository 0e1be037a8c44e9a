#pragma once

#include <optional>
#include <string>
#include <vector>

#include "copyseq/attention.hpp"
#include "copyseq/copy_decoder.hpp"
#include "copyseq/encoder.hpp"
#include "copyseq/gru.hpp"
#include "copyseq/vocab.hpp"

namespace copyseq {

enum class ModelKind { CopyNet, RnnSearch, EncDec };

const std::string& model_kind_name(ModelKind k);
std::optional<ModelKind> parse_model_kind(const std::string& name);

struct ModelConfig {
  ModelKind kind = ModelKind::CopyNet;
  std::size_t vocab_regular = 0;  // N, regular symbols the model can generate
  std::size_t d_e = 150;
  std::size_t d_h = 300;  // per direction
  std::size_t d_s = 300;
  std::size_t d_att = 300;

  std::size_t base_size() const { return vocab_regular + Vocabulary::kSpecials; }
  bool operator==(const ModelConfig&) const = default;
};

struct Model {
  ModelConfig cfg;
  Tensor embedding;  // [(N+4) x d_e]
  GruParams enc_fwd, enc_bwd;
  Tensor w_init;  // [d_h x d_s], decoder start state from the first backward state
  AttentionParams attn;  // unused by EncDec
  GruParams dec;
  Tensor w_out;   // [d_s x (N+4)]
  Tensor w_copy;  // [2 d_h x d_s], CopyNet only

  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  // Stable name -> tensor registry (checkpoint order, optimizer order).
  std::vector<std::pair<std::string, Tensor>> parameters() const;

  std::size_t decoder_input_dim() const;
  bool attentive() const { return cfg.kind != ModelKind::EncDec; }

  Memory encode_source(Graph& g, const std::vector<std::vector<int>>& base_ids) const;
  // s_0 = tanh(W_init h_1_backward)
  Tensor initial_state(Graph& g, const Memory& mem) const;

  Model clone() const;  // deep copy of all parameter values
};

// Batched source with per-instance extended vocabularies.
struct BatchSource {
  std::vector<std::vector<int>> base_ids;
  std::vector<std::vector<int>> ext_ids;
  std::vector<ExtendedVocab> exts;
  std::size_t max_oov = 0;

  std::size_t extended_size(std::size_t base) const { return base + max_oov; }
};

BatchSource make_batch_source(const Vocabulary& vocab, const std::vector<const std::vector<std::string>*>& sources);

}  // namespace copyseq
