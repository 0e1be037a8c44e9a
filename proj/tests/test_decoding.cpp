#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "copyseq/decoding.hpp"

using namespace copyseq;

namespace {

// Table-driven toy model: the next-token distribution depends on (time,
// previous token). Serves both as a DecodeSession and, read directly, as the
// independent enumeration oracle.
struct ToyTable {
  std::size_t E = 6;
  std::map<std::pair<std::size_t, int>, std::vector<double>> rows;

  std::vector<double> row(std::size_t t, int prev) const {
    auto it = rows.find({t, prev});
    if (it != rows.end()) return it->second;
    std::vector<double> uniform(E, 0.0);
    for (std::size_t e = 2; e < E; ++e) uniform[e] = 1.0 / static_cast<double>(E - 2);
    return uniform;
  }
};

class ToySession : public DecodeSession {
 public:
  explicit ToySession(const ToyTable& t) : table_(&t) { times_.push_back(0); }
  std::size_t output_size() const override { return table_->E; }
  std::vector<std::vector<double>> step(const std::vector<int>& parents, const std::vector<int>& prevs,
                                        std::vector<int>* out_states) override {
    std::vector<std::vector<double>> out(parents.size());
    for (std::size_t r = 0; r < parents.size(); ++r) {
      std::size_t t = times_.at(static_cast<std::size_t>(parents[r]));
      std::vector<double> probs = table_->row(t, prevs[r]);
      out[r].resize(probs.size());
      for (std::size_t e = 0; e < probs.size(); ++e)
        out[r][e] = probs[e] > 0 ? std::log(probs[e]) : -std::numeric_limits<double>::infinity();
      out_states->push_back(static_cast<int>(times_.size()));
      times_.push_back(t + 1);
    }
    return out;
  }

 private:
  const ToyTable* table_;
  std::vector<std::size_t> times_;
};

struct ScoredSeq {
  std::vector<int> ids;
  double lp;
};

void enumerate_rec(const ToyTable& table, std::size_t t, int prev, double lp, std::vector<int>& ids,
                   std::size_t max_len, std::vector<ScoredSeq>& out) {
  if (t == max_len) {
    out.push_back({ids, lp});
    return;
  }
  std::vector<double> probs = table.row(t, prev);
  for (std::size_t e = 2; e < probs.size(); ++e) {
    if (probs[e] <= 0) continue;
    ids.push_back(static_cast<int>(e));
    double nlp = lp + std::log(probs[e]);
    if (static_cast<int>(e) == Vocabulary::kEos)
      out.push_back({ids, nlp});
    else
      enumerate_rec(table, t + 1, static_cast<int>(e), nlp, ids, max_len, out);
    ids.pop_back();
  }
}

std::vector<ScoredSeq> enumerate_all(const ToyTable& table, std::size_t max_len) {
  std::vector<ScoredSeq> out;
  std::vector<int> ids;
  enumerate_rec(table, 0, Vocabulary::kBos, 0.0, ids, max_len, out);
  std::stable_sort(out.begin(), out.end(), [](const ScoredSeq& a, const ScoredSeq& b) { return a.lp > b.lp; });
  return out;
}

ToyTable peaked_toy() {
  // E=6: pad, bos, eos, unk, A=4, B=5. Distributions are peaked so a width-2
  // beam is exact on this model.
  ToyTable t;
  auto row = [&](double eos, double unk, double a, double b) {
    return std::vector<double>{0, 0, eos, unk, a, b};
  };
  t.rows[{0, Vocabulary::kBos}] = row(0.05, 0.05, 0.6, 0.3);
  t.rows[{1, 4}] = row(0.7, 0.05, 0.05, 0.2);
  t.rows[{1, 5}] = row(0.1, 0.1, 0.7, 0.1);
  t.rows[{2, 4}] = row(0.8, 0.1, 0.05, 0.05);
  t.rows[{2, 5}] = row(0.6, 0.2, 0.1, 0.1);
  return t;
}

ToyTable random_toy(Rng& rng, std::size_t E = 6, std::size_t horizon = 5) {
  ToyTable t;
  t.E = E;
  for (std::size_t step = 0; step < horizon; ++step) {
    for (int prev : {static_cast<int>(Vocabulary::kBos), 2, 3, 4, 5}) {
      std::vector<double> probs(E, 0.0);
      double z = 0;
      for (std::size_t e = 2; e < E; ++e) {
        probs[e] = 0.05 + rng.real();
        z += probs[e];
      }
      for (std::size_t e = 2; e < E; ++e) probs[e] /= z;
      t.rows[{step, prev}] = probs;
    }
  }
  return t;
}

std::vector<int> greedy_by_hand(const ToyTable& table, std::size_t max_len) {
  std::vector<int> ids;
  int prev = Vocabulary::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<double> probs = table.row(t, prev);
    std::size_t best = 2;
    for (std::size_t e = 2; e < probs.size(); ++e)
      if (probs[e] > probs[best]) best = e;
    ids.push_back(static_cast<int>(best));
    if (static_cast<int>(best) == Vocabulary::kEos) break;
    prev = static_cast<int>(best);
  }
  return ids;
}

}  // namespace

TEST_CASE("width-1 beam equals greedy decoding exactly") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    ToyTable table = random_toy(rng);
    ToySession session(table);
    auto hyps = beam_decode(session, 1, 4);
    REQUIRE(hyps.size() == 1);
    CHECK(hyps[0].ids == greedy_by_hand(table, 4));
  }
}

TEST_CASE("beam decoding is deterministic") {
  ToyTable table = peaked_toy();
  ToySession s1(table), s2(table);
  auto a = beam_decode(s1, 3, 3);
  auto b = beam_decode(s2, 3, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].ids == b[i].ids);
    CHECK(a[i].log_prob == b[i].log_prob);
  }
}

TEST_CASE("beam(2) on the hand-built toy matches exhaustive enumeration") {
  ToyTable table = peaked_toy();
  ToySession session(table);
  auto hyps = beam_decode(session, 2, 3);
  auto oracle = enumerate_all(table, 3);
  REQUIRE(hyps.size() == 2);
  REQUIRE(oracle.size() >= 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(hyps[i].ids == oracle[i].ids);
    CHECK(hyps[i].log_prob == doctest::Approx(oracle[i].lp).epsilon(1e-12));
  }
}

TEST_CASE("beam scores are nonincreasing along every hypothesis") {
  ToyTable table = peaked_toy();
  ToySession session(table);
  for (const Hypothesis& h : beam_decode(session, 3, 3)) {
    // re-score stepwise and confirm the partial sums decrease
    double lp = 0;
    int prev = Vocabulary::kBos;
    std::size_t t = 0;
    for (int id : h.ids) {
      double p = table.row(t, prev)[static_cast<std::size_t>(id)];
      lp += std::log(p);
      CHECK(std::log(p) <= 0.0);
      prev = id;
      ++t;
    }
    CHECK(lp == doctest::Approx(h.log_prob).epsilon(1e-12));
  }
}

TEST_CASE("beam top-1 never scores below greedy on seeded random models") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    ToyTable table = random_toy(rng);
    for (std::size_t width : {2u, 3u, 5u}) {
      ToySession bs(table), gs(table);
      auto beam = beam_decode(bs, width, 4);
      auto greedy = beam_decode(gs, 1, 4);
      CHECK(beam[0].log_prob >= greedy[0].log_prob - 1e-12);
    }
  }
}

TEST_CASE("exact_match strips specials and compares tokens") {
  CHECK(exact_match({"a", "b", "c"}, {"a", "b", "c"}));
  CHECK(exact_match({"a", "b", "</s>"}, {"a", "b"}));
  CHECK_FALSE(exact_match({"a", "q1"}, {"a", "q2"}));
  CHECK_FALSE(exact_match({"a"}, {"a", "b"}));
  CHECK(exact_match({"c", "d", "i", "h", "k", "g"}, {"c", "d", "i", "h", "k", "g"}));
}

TEST_CASE("model session renders copied OOV ids back to source strings") {
  ModelConfig cfg;
  cfg.kind = ModelKind::CopyNet;
  cfg.vocab_regular = 6;
  cfg.d_e = 2;
  cfg.d_h = 3;
  cfg.d_s = 3;
  cfg.d_att = 2;
  Model m = Model::init(cfg, 3);
  Vocabulary vocab({"s0", "s1", "s2", "s3", "s4", "s5"});
  std::vector<std::string> source{"s1", "oovA", "s2", "oovB", "oovA"};
  ModelDecodeSession session(m, vocab, source);
  CHECK(session.output_size() == cfg.base_size() + 2);
  // every emitted id renders to a concrete token
  auto hyps = beam_decode(session, 3, 8);
  for (const Hypothesis& h : hyps) {
    auto toks = render_ids(session.extended(), h.ids);
    for (const auto& t : toks) CHECK(t != "");
  }
  // slots map back to the OOV strings
  CHECK(session.extended().render(static_cast<int>(cfg.base_size())) == "oovA");
  CHECK(session.extended().render(static_cast<int>(cfg.base_size()) + 1) == "oovB");
}

TEST_CASE("model greedy decode equals a manual argmax loop") {
  ModelConfig cfg;
  cfg.kind = ModelKind::CopyNet;
  cfg.vocab_regular = 6;
  cfg.d_e = 2;
  cfg.d_h = 3;
  cfg.d_s = 3;
  cfg.d_att = 2;
  Model m = Model::init(cfg, 7);
  Vocabulary vocab({"s0", "s1", "s2", "s3", "s4", "s5"});
  std::vector<std::string> source{"s1", "qq", "s2"};
  auto res = decode_instance(m, vocab, source, 1, 6);
  REQUIRE(res.hyps.size() == 1);

  // manual loop through decoder_step
  auto es = build_extended(vocab, source);
  Graph g(false);
  Memory mem = m.encode_source(g, {es.base_ids});
  std::vector<std::vector<int>> ext{es.ext_ids};
  CopyDecoderContext ctx(g, mem, m.attn, m.w_copy, m.dec, m.embedding, m.w_out, ext, es.ext.size());
  DecoderState st = initial_decoder_state(m.initial_state(g, mem), 1, mem.steps);
  int prev = Vocabulary::kBos;
  std::vector<int> ids;
  for (int t = 0; t < 6; ++t) {
    auto [next, mix] = decoder_step(g, {prev}, st, ctx);
    st = next;
    std::size_t best = 2;
    for (std::size_t e = 2; e < es.ext.size(); ++e)
      if (mix.probs.at(0, e) > mix.probs.at(0, best)) best = e;
    ids.push_back(static_cast<int>(best));
    if (static_cast<int>(best) == Vocabulary::kEos) break;
    prev = static_cast<int>(best);
  }
  CHECK(res.hyps[0].ids == ids);
}

TEST_CASE("session exposes mixture diagnostics for emitted steps") {
  ModelConfig cfg;
  cfg.kind = ModelKind::CopyNet;
  cfg.vocab_regular = 5;
  cfg.d_e = 2;
  cfg.d_h = 2;
  cfg.d_s = 2;
  cfg.d_att = 2;
  Model m = Model::init(cfg, 9);
  Vocabulary vocab({"a", "b", "c", "d", "e"});
  ModelDecodeSession session(m, vocab, {"a", "zz", "b"});
  auto hyps = beam_decode(session, 2, 5);
  REQUIRE(!hyps.empty());
  DecodeSession::MixInfo info;
  REQUIRE(session.mixture_info(hyps[0].states[0], &info));
  CHECK(info.copy_by_pos.size() == 3);
  CHECK(info.gen_share + info.copy_share == doctest::Approx(1.0).epsilon(1e-9));
}
