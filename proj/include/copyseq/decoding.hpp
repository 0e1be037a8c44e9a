#pragma once

#include <memory>
#include <string>
#include <vector>

#include "copyseq/baselines.hpp"
#include "copyseq/model.hpp"

namespace copyseq {

struct Hypothesis {
  std::vector<int> ids;      // emitted ids, EOS last when finished
  std::vector<int> states;   // session state after each emission
  double log_prob = 0.0;
  bool finished = false;
  bool greedy_chain = true;  // lies on the pure argmax rollout
};

// Step surface the beam searcher drives. State 0 is the fresh start state;
// step() advances any set of stored states at once and returns per-row
// log-probability vectors over the session's output id space (specials at
// 0..3). Impossible ids carry -inf.
class DecodeSession {
 public:
  virtual ~DecodeSession() = default;
  virtual std::size_t output_size() const = 0;
  virtual std::vector<std::vector<double>> step(const std::vector<int>& parent_states,
                                                const std::vector<int>& prev_tokens,
                                                std::vector<int>* out_states) = 0;

  struct MixInfo {
    double gen_share = 0.0, copy_share = 0.0;
    std::vector<double> copy_by_pos;
    std::vector<double> gen_probs;
    std::vector<double> probs;
  };
  virtual bool mixture_info(int /*state*/, MixInfo* /*out*/) const { return false; }
};

// Beam search over the session's id space: hypotheses ranked by the plain
// sum of log-probabilities (no length normalization); finished hypotheses
// freeze and keep competing for beam slots. Ties break by predecessor order
// so results are deterministic. The pure argmax rollout always survives
// selection, which makes the top-1 result at any width at least as good as
// greedy decoding.
std::vector<Hypothesis> beam_decode(DecodeSession& session, std::size_t width, std::size_t max_len);

// token-for-token equality with PAD/BOS/EOS stripped from both sides
bool exact_match(const std::vector<std::string>& predicted, const std::vector<std::string>& gold);

// Model-backed session for one source sequence.
class ModelDecodeSession : public DecodeSession {
 public:
  ModelDecodeSession(const Model& model, const Vocabulary& vocab, const std::vector<std::string>& source);
  ~ModelDecodeSession() override;

  std::size_t output_size() const override;
  std::vector<std::vector<double>> step(const std::vector<int>& parent_states,
                                        const std::vector<int>& prev_tokens,
                                        std::vector<int>* out_states) override;
  bool mixture_info(int state, MixInfo* out) const override;

  const ExtendedVocab& extended() const;
  std::size_t source_len() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct DecodeResult {
  std::vector<Hypothesis> hyps;
  std::vector<std::vector<std::string>> tokens;  // rendered, EOS stripped
};

// max_len 0 means 2 * source length + 5.
DecodeResult decode_instance(const Model& model, const Vocabulary& vocab,
                             const std::vector<std::string>& source, std::size_t width,
                             std::size_t max_len = 0);

std::vector<std::string> render_ids(const ExtendedVocab& ext, const std::vector<int>& ids);

}  // namespace copyseq
