#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "copyseq/copy_decoder.hpp"
#include "copyseq/vocab.hpp"
#include "test_util.hpp"

using namespace copyseq;
using copyseq::testing::check_gradients;
using copyseq::testing::random_weights;

namespace {

// Independent construction of the mixture row: exponentiate the concatenated
// scores around their max, divide by the explicit Z, then sum duplicates.
std::vector<double> mixture_oracle_row(const std::vector<double>& gen_scores,
                                       const std::vector<double>& copy_scores, const std::vector<int>& ext_ids,
                                       std::size_t extended_size) {
  std::vector<double> scores = gen_scores;
  scores.insert(scores.end(), copy_scores.begin(), copy_scores.end());
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : scores)
    if (!is_masked_score(s)) mx = std::max(mx, s);
  double z = 0.0;
  std::vector<double> e(scores.size(), 0.0);
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (is_masked_score(scores[j])) continue;
    e[j] = std::exp(scores[j] - mx);
    z += e[j];
  }
  std::vector<double> probs(extended_size, 0.0);
  for (std::size_t j = 0; j < gen_scores.size(); ++j) probs[j] += e[j] / z;
  for (std::size_t t = 0; t < copy_scores.size() && t < ext_ids.size(); ++t)
    probs[static_cast<std::size_t>(ext_ids[t])] += e[gen_scores.size() + t] / z;
  return probs;
}

struct Rig {
  std::size_t n = 5, d_e = 2, d_h = 2, d_s = 3, d_att = 2;
  Tensor emb;
  GruParams fwd, bwd, dec;
  AttentionParams attn;
  Tensor w_out, w_copy;

  explicit Rig(Rng& rng) {
    emb = Tensor::uniform({n + 4, d_e}, rng, 0.5, true);
    fwd = make_gru_params(d_e, d_h, rng, 0.4);
    bwd = make_gru_params(d_e, d_h, rng, 0.4);
    dec = make_gru_params(d_e + 4 * d_h, d_s, rng, 0.4);
    attn = make_attention_params(d_s, 2 * d_h, d_att, rng, 0.4);
    w_out = Tensor::uniform({d_s, n + 4}, rng, 0.5, true);
    w_copy = Tensor::uniform({2 * d_h, d_s}, rng, 0.5, true);
  }
};

}  // namespace

TEST_CASE("score_generate: zero weights give zero finite scores, sentinel at PAD/BOS") {
  Graph g(false);
  Tensor w = Tensor::zeros({3, 7});
  Tensor s = Tensor::of({1, 3}, {0.2, -0.4, 0.9});
  Tensor scores = score_generate(g, s, w);
  CHECK(is_masked_score(scores.at(0, Vocabulary::kPad)));
  CHECK(is_masked_score(scores.at(0, Vocabulary::kBos)));
  for (std::size_t j = 2; j < 7; ++j) CHECK(scores.at(0, j) == 0.0);
}

TEST_CASE("score_generate: one-hot state reads one weight row") {
  Graph g(false);
  Rng rng(3);
  Tensor w = Tensor::uniform({4, 8}, rng, 1.0);
  Tensor s = Tensor::of({1, 4}, {0, 0, 1, 0});
  Tensor scores = score_generate(g, s, w);
  for (std::size_t j = 2; j < 8; ++j) CHECK(scores.at(0, j) == doctest::Approx(w.at(2, j)).epsilon(1e-14));
}

TEST_CASE("score_copy zero cases and masking") {
  Rng rng(5);
  Rig rig(rng);
  Graph g(false);
  Memory mem = encode(g, {{4, 5, 6}, {7, 8}}, rig.emb, rig.fwd, rig.bwd);
  Tensor s = Tensor::uniform({2, rig.d_s}, rng, 1.0);
  Tensor zero_w = Tensor::zeros({2 * rig.d_h, rig.d_s});
  Tensor a = score_copy(g, zero_w, mem, s);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < mem.lengths[b]; ++t) CHECK(a.at(b, t) == 0.0);
  Tensor b2 = score_copy(g, rig.w_copy, mem, Tensor::zeros({2, rig.d_s}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < mem.lengths[b]; ++t) CHECK(b2.at(b, t) == 0.0);
  CHECK(is_masked_score(b2.at(1, 2)));  // padded position
}

TEST_CASE("score_copy gradient through the tanh projection") {
  Rng rng(7);
  Rig rig(rng);
  std::vector<std::vector<int>> batch{{4, 5, 6}, {7, 8}};
  Tensor s = Tensor::uniform({2, rig.d_s}, rng, 1.0);
  Tensor w = random_weights({2, 3}, rng);
  w.at(1, 2) = 0.0;  // never consume the sentinel
  std::vector<Tensor> inputs{rig.w_copy, s};
  auto res = check_gradients(
      [&](Graph& g, std::vector<Tensor>& in) {
        Memory mem = encode(g, batch, rig.emb, rig.fwd, rig.bwd);
        return sum_all(g, mul(g, score_copy(g, in[0], mem, in[1]), w));
      },
      inputs);
  CHECK(res.ok);
}

TEST_CASE("mix_predict matches the hand-computed four-slot softmax") {
  // V = {a,b} plus UNK live; PAD/BOS/EOS sentinel; source = [a]; all scores 0.
  Graph g(false);
  std::vector<double> gen(6, 0.0);
  gen[Vocabulary::kPad] = kMaskedScore;
  gen[Vocabulary::kBos] = kMaskedScore;
  gen[Vocabulary::kEos] = kMaskedScore;
  Tensor gen_scores = Tensor::of({1, 6}, gen);
  Tensor copy_scores = Tensor::of({1, 1}, {0.0});
  std::vector<std::vector<int>> ids{{4}};  // id of a
  MixtureOutput mix = mix_predict(g, gen_scores, copy_scores, ids, 6);
  CHECK(mix.probs.at(0, 4) == doctest::Approx(0.5).epsilon(1e-12));   // a: generate + copy
  CHECK(mix.probs.at(0, 5) == doctest::Approx(0.25).epsilon(1e-12));  // b
  CHECK(mix.probs.at(0, Vocabulary::kUnk) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(mix.probs.at(0, Vocabulary::kPad) == 0.0);
  CHECK(mix.copy_by_pos.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("tokens absent from the source get zero copy contribution exactly") {
  Rng rng(11);
  Graph g(false);
  Tensor gen_scores = Tensor::uniform({1, 8}, rng, 1.0);
  gen_scores.at(0, Vocabulary::kPad) = kMaskedScore;
  gen_scores.at(0, Vocabulary::kBos) = kMaskedScore;
  Tensor copy_scores = Tensor::uniform({1, 3}, rng, 1.0);
  std::vector<std::vector<int>> ids{{5, 6, 5}};
  MixtureOutput mix = mix_predict(g, gen_scores, copy_scores, ids, 8);
  // 4 and 7 are in V but never in the source: probability equals the generate share exactly
  CHECK(mix.probs.at(0, 4) == mix.gen_probs.at(0, 4));
  CHECK(mix.probs.at(0, 7) == mix.gen_probs.at(0, 7));
}

TEST_CASE("duplicate OOV source positions sum their copy probabilities") {
  Graph g(false);
  // N=2: base 6 wide; source = [q,q] with q OOV at slot 6; E=7
  std::vector<double> gen(6, 0.0);
  gen[Vocabulary::kPad] = kMaskedScore;
  gen[Vocabulary::kBos] = kMaskedScore;
  Tensor gen_scores = Tensor::of({1, 6}, gen);
  Tensor copy_scores = Tensor::of({1, 2}, {0.7, 0.7});
  std::vector<std::vector<int>> ids{{6, 6}};
  MixtureOutput mix = mix_predict(g, gen_scores, copy_scores, ids, 7);
  CHECK(mix.probs.at(0, 6) ==
        doctest::Approx(mix.copy_by_pos.at(0, 0) + mix.copy_by_pos.at(0, 1)).epsilon(1e-15));
  // and the slot has zero generate contribution structurally
  CHECK(mix.gen_probs.cols() == 6);
  CHECK(mix.probs.at(0, 6) > 0.0);
}

TEST_CASE("mix_predict equals the brute-force oracle on random instances") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 2 + rng.index(6);            // regular symbols
    std::size_t src_len = 1 + rng.index(5);
    std::size_t n_oov = rng.index(3);
    std::size_t G = n + 4, E = G + n_oov;
    std::vector<double> gen(G);
    for (auto& v : gen) v = rng.uniform(-3, 3);
    gen[Vocabulary::kPad] = kMaskedScore;
    gen[Vocabulary::kBos] = kMaskedScore;
    std::vector<double> cp(src_len);
    for (auto& v : cp) v = rng.uniform(-3, 3);
    std::vector<int> ids(src_len);
    for (auto& id : ids) {
      bool oov = n_oov > 0 && rng.coin();
      id = oov ? static_cast<int>(G + rng.index(n_oov)) : static_cast<int>(4 + rng.index(n));
    }
    Graph g(false);
    MixtureOutput mix = mix_predict(g, Tensor::of({1, G}, gen), Tensor::of({1, src_len}, cp), {ids}, E);
    std::vector<double> oracle = mixture_oracle_row(gen, cp, ids, E);
    double worst = 0.0, sum = 0.0;
    for (std::size_t j = 0; j < E; ++j) {
      worst = std::max(worst, std::abs(mix.probs.at(0, j) - oracle[j]));
      sum += mix.probs.at(0, j);
    }
    CHECK(worst <= 1e-12);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("selective read spec cases") {
  Rng rng(17);
  Rig rig(rng);
  Graph g(false);
  // source [a b a] with a=4, b=5
  std::vector<std::vector<int>> ext_ids{{4, 5, 4}};
  Memory mem = encode(g, {{4, 5, 4}}, rig.emb, rig.fwd, rig.bwd);
  Tensor cbp = Tensor::of({1, 3}, {0.3, 0.1, 0.1});

  SUBCASE("weighted positions, K renormalized") {
    Tensor zeta = selective_read(g, {4}, cbp, ext_ids, mem);
    for (std::size_t j = 0; j < 2 * rig.d_h; ++j)
      CHECK(zeta.at(0, j) ==
            doctest::Approx(0.75 * mem.states.at(0, j) + 0.25 * mem.states.at(2, j)).epsilon(1e-12));
  }
  SUBCASE("token absent from the source reads zero") {
    Tensor zeta = selective_read(g, {Vocabulary::kEos}, cbp, ext_ids, mem);
    for (std::size_t j = 0; j < 2 * rig.d_h; ++j) CHECK(zeta.at(0, j) == 0.0);
  }
  SUBCASE("single match takes the whole weight regardless of magnitude") {
    Tensor tiny = Tensor::of({1, 3}, {0.0, 1e-3, 0.0});
    Tensor zeta = selective_read(g, {5}, tiny, ext_ids, mem);
    for (std::size_t j = 0; j < 2 * rig.d_h; ++j)
      CHECK(zeta.at(0, j) == doctest::Approx(mem.states.at(1, j)).epsilon(1e-12));
  }
  SUBCASE("rho invariant under positive rescaling of the copy probabilities") {
    Tensor scaled = Tensor::of({1, 3}, {0.3 * 7.3, 0.1 * 7.3, 0.1 * 7.3});
    Tensor a = selective_read(g, {4}, cbp, ext_ids, mem);
    Tensor b = selective_read(g, {4}, scaled, ext_ids, mem);
    for (std::size_t j = 0; j < 2 * rig.d_h; ++j) CHECK(std::abs(a.at(0, j) - b.at(0, j)) <= 1e-12);
  }
}

TEST_CASE("decoder_step from the start state emits a valid distribution") {
  Rng rng(19);
  Rig rig(rng);
  Graph g(false);
  std::vector<std::vector<int>> base{{4, 3, 6}, {7, 8, 8}};   // row 0 has an OOV as UNK
  std::vector<std::vector<int>> ext{{4, 9, 6}, {7, 8, 8}};    // its slot is 9
  Memory mem = encode(g, base, rig.emb, rig.fwd, rig.bwd);
  CopyDecoderContext ctx(g, mem, rig.attn, rig.w_copy, rig.dec, rig.emb, rig.w_out, ext, 10);
  DecoderState st = initial_decoder_state(Tensor::zeros({2, rig.d_s}), 2, mem.steps);
  auto [next, mix] = decoder_step(g, {Vocabulary::kBos, Vocabulary::kBos}, st, ctx);
  for (std::size_t b = 0; b < 2; ++b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 10; ++j) sum += mix.probs.at(b, j);
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
  CHECK(mix.probs.at(1, 9) == 0.0);  // row 1 has no OOV
  CHECK(next.copy_by_pos.rows() == 2);

  // identical rows give identical outputs
  Graph g2(false);
  Memory m2 = encode(g2, {base[0], base[0]}, rig.emb, rig.fwd, rig.bwd);
  std::vector<std::vector<int>> ext2{ext[0], ext[0]};
  CopyDecoderContext c2(g2, m2, rig.attn, rig.w_copy, rig.dec, rig.emb, rig.w_out, ext2, 10);
  DecoderState s2 = initial_decoder_state(Tensor::zeros({2, rig.d_s}), 2, m2.steps);
  auto [n2, mix2] = decoder_step(g2, {Vocabulary::kBos, Vocabulary::kBos}, s2, c2);
  for (std::size_t j = 0; j < 10; ++j)
    CHECK(mix2.probs.at(0, j) == doctest::Approx(mix2.probs.at(1, j)).epsilon(1e-14));
  (void)n2;
}

TEST_CASE("full decoder step gradients vs finite differences") {
  Rng rng(23);
  Rig rig(rng);
  std::vector<std::vector<int>> base{{4, 3, 6}, {7, 8, 8}};
  std::vector<std::vector<int>> ext{{4, 9, 6}, {7, 8, 8}};
  Tensor s_prev = Tensor::uniform({2, rig.d_s}, rng, 0.8);
  Tensor cbp = Tensor::of({2, 3}, {0.2, 0.1, 0.15, 0.05, 0.3, 0.1});
  Tensor wp = random_weights({2, 10}, rng);
  Tensor ws = random_weights({2, rig.d_s}, rng);
  // prev tokens: row 0 = the OOV slot (matches), row 1 = EOS (no match)
  std::vector<int> prev{9, Vocabulary::kEos};
  std::vector<Tensor> inputs{rig.emb,      rig.w_out, rig.w_copy, rig.attn.wa, rig.attn.ua,
                             rig.attn.va,  rig.dec.wz, rig.dec.uh, rig.dec.bh,  s_prev,
                             cbp,          rig.fwd.wz};
  auto res = check_gradients(
      [&](Graph& g, std::vector<Tensor>& in) {
        AttentionParams attn = rig.attn;
        attn.wa = in[3];
        attn.ua = in[4];
        attn.va = in[5];
        GruParams dec = rig.dec;
        dec.wz = in[6];
        dec.uh = in[7];
        dec.bh = in[8];
        GruParams fwd = rig.fwd;
        fwd.wz = in[11];
        Memory mem = encode(g, base, in[0], fwd, rig.bwd);
        CopyDecoderContext ctx(g, mem, attn, in[2], dec, in[0], in[1], ext, 10);
        DecoderState st{in[9], in[10]};
        auto [next, mix] = decoder_step(g, prev, st, ctx);
        return add(g, sum_all(g, mul(g, mix.probs, wp)), sum_all(g, mul(g, next.s, ws)));
      },
      inputs);
  CHECK(res.ok);
  CHECK(res.worst_rel < 1e-4);
}

TEST_CASE("consistently permuting OOV slots permutes the output and nothing else") {
  Rng rng(29);
  Rig rig(rng);
  // source has two OOVs; slot order q=9,r=10 vs swapped
  std::vector<std::vector<int>> base{{4, 3, 3, 5}};
  std::vector<std::vector<int>> ext_a{{4, 9, 10, 5}};
  std::vector<std::vector<int>> ext_b{{4, 10, 9, 5}};
  Graph g(false);
  Memory mem = encode(g, base, rig.emb, rig.fwd, rig.bwd);
  CopyDecoderContext ca(g, mem, rig.attn, rig.w_copy, rig.dec, rig.emb, rig.w_out, ext_a, 11);
  CopyDecoderContext cb(g, mem, rig.attn, rig.w_copy, rig.dec, rig.emb, rig.w_out, ext_b, 11);
  DecoderState st = initial_decoder_state(Tensor::zeros({1, rig.d_s}), 1, mem.steps);
  auto [na, ma] = decoder_step(g, {Vocabulary::kBos}, st, ca);
  auto [nb, mb] = decoder_step(g, {Vocabulary::kBos}, st, cb);
  for (std::size_t j = 0; j < 9; ++j) CHECK(ma.probs.at(0, j) == doctest::Approx(mb.probs.at(0, j)).epsilon(1e-14));
  CHECK(ma.probs.at(0, 9) == doctest::Approx(mb.probs.at(0, 10)).epsilon(1e-14));
  CHECK(ma.probs.at(0, 10) == doctest::Approx(mb.probs.at(0, 9)).epsilon(1e-14));
  (void)na;
  (void)nb;
}
