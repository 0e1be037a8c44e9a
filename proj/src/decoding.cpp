#include "copyseq/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace copyseq {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool is_special(const std::string& tok) { return tok == "<pad>" || tok == "<s>" || tok == "</s>"; }

}  // namespace

std::vector<Hypothesis> beam_decode(DecodeSession& session, std::size_t width, std::size_t max_len) {
  if (width < 1 || max_len < 1) throw ConfigError("beam_decode: width and max_len must be >= 1");
  const std::size_t E = session.output_size();

  std::vector<Hypothesis> beam{Hypothesis{}};
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<std::size_t> live;
    std::vector<int> parents, prevs;
    for (std::size_t i = 0; i < beam.size(); ++i) {
      if (beam[i].finished) continue;
      live.push_back(i);
      parents.push_back(beam[i].states.empty() ? 0 : beam[i].states.back());
      prevs.push_back(beam[i].ids.empty() ? Vocabulary::kBos : beam[i].ids.back());
    }
    if (live.empty()) break;
    std::vector<int> new_states;
    std::vector<std::vector<double>> lps = session.step(parents, prevs, &new_states);

    struct Cand {
      double score;
      std::size_t hyp;
      int token;  // -1 = frozen finished hypothesis
      int state;
      bool greedy;
    };
    std::vector<Cand> cands;
    cands.reserve(live.size() * E + beam.size());
    for (std::size_t i = 0; i < beam.size(); ++i)
      if (beam[i].finished) cands.push_back({beam[i].log_prob, i, -1, 0, beam[i].greedy_chain});
    for (std::size_t r = 0; r < live.size(); ++r) {
      const std::size_t i = live[r];
      std::size_t argmax = 0;
      for (std::size_t e = 1; e < E; ++e)
        if (lps[r][e] > lps[r][argmax]) argmax = e;
      for (std::size_t e = 0; e < E; ++e) {
        double lp = lps[r][e];
        if (lp == kNegInf) continue;
        bool greedy = beam[i].greedy_chain && e == argmax;
        cands.push_back({beam[i].log_prob + lp, i, static_cast<int>(e), new_states[r], greedy});
      }
    }
    std::size_t keep = std::min(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [](const Cand& a, const Cand& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.hyp != b.hyp) return a.hyp < b.hyp;
                        return a.token < b.token;
                      });
    // the argmax rollout keeps its seat even when outscored
    bool greedy_kept = false;
    for (std::size_t c = 0; c < keep; ++c) greedy_kept = greedy_kept || cands[c].greedy;
    if (!greedy_kept) {
      auto it = std::find_if(cands.begin() + static_cast<long>(keep), cands.end(),
                             [](const Cand& c) { return c.greedy; });
      if (it != cands.end()) cands[keep - 1] = *it;
    }
    std::vector<Hypothesis> next;
    next.reserve(keep);
    for (std::size_t c = 0; c < keep; ++c) {
      const Cand& cand = cands[c];
      if (cand.token < 0) {
        next.push_back(beam[cand.hyp]);
        continue;
      }
      Hypothesis h = beam[cand.hyp];
      h.ids.push_back(cand.token);
      h.states.push_back(cand.state);
      h.log_prob = cand.score;
      h.finished = cand.token == Vocabulary::kEos;
      h.greedy_chain = cand.greedy;
      next.push_back(std::move(h));
    }
    beam = std::move(next);
    if (std::all_of(beam.begin(), beam.end(), [](const Hypothesis& h) { return h.finished; })) break;
  }
  std::stable_sort(beam.begin(), beam.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; });
  return beam;
}

bool exact_match(const std::vector<std::string>& predicted, const std::vector<std::string>& gold) {
  auto strip = [](const std::vector<std::string>& v) {
    std::vector<std::string> out;
    for (const auto& t : v)
      if (!is_special(t)) out.push_back(t);
    return out;
  };
  return strip(predicted) == strip(gold);
}

std::vector<std::string> render_ids(const ExtendedVocab& ext, const std::vector<int>& ids) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) {
    if (id == Vocabulary::kEos) break;
    out.push_back(ext.render(id));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct ModelDecodeSession::Impl {
  const Model* model;
  ExtendedSource src;
  std::size_t src_len = 0, ext_size = 0;

  Memory mem1;  // batch of one
  Tensor s0;
  // tiled machinery per row count, built lazily (values only, no gradients)
  struct Tiled {
    Memory mem;
    std::vector<std::vector<int>> ext_ids;
    std::unique_ptr<CopyDecoderContext> copy_ctx;
    std::unique_ptr<BaselineContext> base_ctx;
  };
  std::vector<std::unique_ptr<Tiled>> tiled;  // index = rows - 1

  struct State {
    std::vector<double> s;
    std::vector<double> copy_by_pos;  // CopyNet only
    DecodeSession::MixInfo info;
    bool has_info = false;
  };
  std::vector<State> states;

  Graph ctx_graph{false};  // keeps context tensors alive; no closures recorded

  Tiled& tiled_for(std::size_t rows) {
    if (tiled.size() < rows) tiled.resize(rows);
    if (!tiled[rows - 1]) {
      auto t = std::make_unique<Tiled>();
      const std::size_t T = mem1.steps, W = mem1.width();
      Tensor states_n = Tensor::zeros({rows * T, W});
      for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(mem1.states.data(), T * W, states_n.data() + r * T * W);
      Tensor mask_n = Tensor::zeros({rows, T});
      for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(mem1.mask.data(), T, mask_n.data() + r * T);
      t->mem.states = states_n;
      t->mem.mask = mask_n;
      t->mem.lengths.assign(rows, src_len);
      t->mem.batch = rows;
      t->mem.steps = T;
      t->ext_ids.assign(rows, src.ext_ids);
      if (model->cfg.kind == ModelKind::CopyNet)
        t->copy_ctx = std::make_unique<CopyDecoderContext>(ctx_graph, t->mem, model->attn, model->w_copy,
                                                           model->dec, model->embedding, model->w_out,
                                                           t->ext_ids, ext_size);
      else
        t->base_ctx = std::make_unique<BaselineContext>(ctx_graph, *model, t->mem);
      tiled[rows - 1] = std::move(t);
    }
    return *tiled[rows - 1];
  }
};

ModelDecodeSession::ModelDecodeSession(const Model& model, const Vocabulary& vocab,
                                       const std::vector<std::string>& source)
    : impl_(std::make_unique<Impl>()) {
  impl_->model = &model;
  impl_->src = build_extended(vocab, source);
  impl_->src_len = source.size();
  impl_->ext_size = model.cfg.kind == ModelKind::CopyNet ? impl_->src.ext.size() : model.cfg.base_size();
  Graph g(false);
  impl_->mem1 = model.encode_source(g, {impl_->src.base_ids});
  impl_->s0 = model.initial_state(g, impl_->mem1);
  // state 0: start state
  Impl::State start;
  start.s.assign(impl_->s0.values().begin(), impl_->s0.values().end());
  start.copy_by_pos.assign(impl_->mem1.steps, 0.0);
  impl_->states.push_back(std::move(start));
}

ModelDecodeSession::~ModelDecodeSession() = default;

std::size_t ModelDecodeSession::output_size() const { return impl_->ext_size; }

const ExtendedVocab& ModelDecodeSession::extended() const { return impl_->src.ext; }

std::size_t ModelDecodeSession::source_len() const { return impl_->src_len; }

std::vector<std::vector<double>> ModelDecodeSession::step(const std::vector<int>& parent_states,
                                                          const std::vector<int>& prev_tokens,
                                                          std::vector<int>* out_states) {
  Impl& im = *impl_;
  const std::size_t n = parent_states.size();
  if (n == 0 || prev_tokens.size() != n) throw DimensionError("decode step: bad row count");
  const Model& model = *im.model;
  const std::size_t d_s = model.cfg.d_s, T = im.mem1.steps;

  Tensor s_prev = Tensor::zeros({n, d_s});
  for (std::size_t r = 0; r < n; ++r) {
    const auto& st = im.states.at(static_cast<std::size_t>(parent_states[r]));
    std::copy_n(st.s.data(), d_s, s_prev.data() + r * d_s);
  }

  Graph g(false);
  Impl::Tiled& tl = im.tiled_for(n);
  std::vector<std::vector<double>> out(n);
  if (model.cfg.kind == ModelKind::CopyNet) {
    Tensor cbp = Tensor::zeros({n, T});
    for (std::size_t r = 0; r < n; ++r) {
      const auto& st = im.states.at(static_cast<std::size_t>(parent_states[r]));
      std::copy_n(st.copy_by_pos.data(), T, cbp.data() + r * T);
    }
    DecoderState prev{s_prev, cbp};
    auto [next, mix] = decoder_step(g, prev_tokens, prev, *tl.copy_ctx);
    for (std::size_t r = 0; r < n; ++r) {
      Impl::State st;
      st.s.assign(next.s.data() + r * d_s, next.s.data() + (r + 1) * d_s);
      st.copy_by_pos.assign(mix.copy_by_pos.data() + r * T, mix.copy_by_pos.data() + (r + 1) * T);
      st.has_info = true;
      st.info.copy_by_pos = st.copy_by_pos;
      st.info.gen_probs.assign(mix.gen_probs.data() + r * mix.gen_probs.cols(),
                               mix.gen_probs.data() + (r + 1) * mix.gen_probs.cols());
      st.info.probs.assign(mix.probs.data() + r * im.ext_size, mix.probs.data() + (r + 1) * im.ext_size);
      for (double p : st.info.copy_by_pos) st.info.copy_share += p;
      for (double p : st.info.gen_probs) st.info.gen_share += p;
      out_states->push_back(static_cast<int>(im.states.size()));
      im.states.push_back(std::move(st));
      out[r].resize(im.ext_size);
      for (std::size_t e = 0; e < im.ext_size; ++e) {
        double p = mix.probs.at(r, e);
        out[r][e] = p > 0.0 ? std::log(p) : kNegInf;
      }
    }
  } else {
    auto [s_t, probs] = baseline_step(g, prev_tokens, s_prev, *tl.base_ctx);
    for (std::size_t r = 0; r < n; ++r) {
      Impl::State st;
      st.s.assign(s_t.data() + r * d_s, s_t.data() + (r + 1) * d_s);
      out_states->push_back(static_cast<int>(im.states.size()));
      im.states.push_back(std::move(st));
      out[r].resize(im.ext_size);
      for (std::size_t e = 0; e < im.ext_size; ++e) {
        double p = probs.at(r, e);
        out[r][e] = p > 0.0 ? std::log(p) : kNegInf;
      }
    }
  }
  return out;
}

bool ModelDecodeSession::mixture_info(int state, MixInfo* out) const {
  const auto& st = impl_->states.at(static_cast<std::size_t>(state));
  if (!st.has_info) return false;
  *out = st.info;
  return true;
}

DecodeResult decode_instance(const Model& model, const Vocabulary& vocab,
                             const std::vector<std::string>& source, std::size_t width,
                             std::size_t max_len) {
  ModelDecodeSession session(model, vocab, source);
  if (max_len == 0) max_len = 2 * source.size() + 5;
  DecodeResult res;
  res.hyps = beam_decode(session, width, max_len);
  res.tokens.reserve(res.hyps.size());
  for (const Hypothesis& h : res.hyps) res.tokens.push_back(render_ids(session.extended(), h.ids));
  return res;
}

}  // namespace copyseq
