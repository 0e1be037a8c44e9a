#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "copyseq/baselines.hpp"
#include "test_util.hpp"

using namespace copyseq;
using copyseq::testing::check_gradients;
using copyseq::testing::random_weights;

namespace {

Model tiny(ModelKind kind, std::uint64_t seed = 11) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.vocab_regular = 6;
  cfg.d_e = 2;
  cfg.d_h = 3;
  cfg.d_s = 3;
  cfg.d_att = 2;
  return Model::init(cfg, seed);
}

}  // namespace

TEST_CASE("baseline probabilities sum to one with PAD/BOS at zero") {
  for (ModelKind kind : {ModelKind::EncDec, ModelKind::RnnSearch}) {
    Model m = tiny(kind);
    Graph g(false);
    Memory mem = m.encode_source(g, {{4, 5, 6}, {7, 8}});
    BaselineContext ctx(g, m, mem);
    Tensor s = m.initial_state(g, mem);
    auto [s1, probs] = baseline_step(g, {Vocabulary::kBos, Vocabulary::kBos}, s, ctx);
    for (std::size_t b = 0; b < 2; ++b) {
      double sum = 0;
      for (std::size_t j = 0; j < probs.cols(); ++j) sum += probs.at(b, j);
      CHECK(std::abs(sum - 1.0) <= 1e-9);
      CHECK(probs.at(b, Vocabulary::kPad) == 0.0);
      CHECK(probs.at(b, Vocabulary::kBos) == 0.0);
      CHECK(probs.at(b, Vocabulary::kEos) > 0.0);
    }
    CHECK(probs.cols() == m.cfg.base_size());  // structurally unable to emit anything else
    (void)s1;
  }
}

TEST_CASE("EncDec prediction only sees the source through the final states") {
  Model m = tiny(ModelKind::EncDec);
  // two sources sharing first fwd/backward-relevant tokens won't match, so
  // instead check invariance directly: identical final encoder states imply
  // identical predictions. Encode the same source twice in one batch, then
  // compare stepwise outputs for equality row to row.
  Graph g(false);
  Memory mem = m.encode_source(g, {{4, 5, 6, 7}, {4, 5, 6, 7}});
  BaselineContext ctx(g, m, mem);
  Tensor s = m.initial_state(g, mem);
  auto [s1, p1] = baseline_step(g, {Vocabulary::kBos, Vocabulary::kBos}, s, ctx);
  auto [s2, p2] = baseline_step(g, {4, 4}, s1, ctx);
  for (std::size_t j = 0; j < p2.cols(); ++j)
    CHECK(p2.at(0, j) == doctest::Approx(p2.at(1, j)).epsilon(1e-14));
  (void)p1;
  (void)s2;
}

TEST_CASE("fixed context is constant across steps for EncDec") {
  Model m = tiny(ModelKind::EncDec);
  Graph g(false);
  Memory mem = m.encode_source(g, {{4, 5, 6}});
  BaselineContext ctx(g, m, mem);
  Tensor before = ctx.fixed_context;
  Tensor s = m.initial_state(g, mem);
  auto [s1, p1] = baseline_step(g, {Vocabulary::kBos}, s, ctx);
  auto [s2, p2] = baseline_step(g, {5}, s1, ctx);
  CHECK(ctx.fixed_context.same_storage(before));
  (void)p1;
  (void)p2;
  (void)s2;
}

TEST_CASE("baseline step gradients vs finite differences") {
  for (ModelKind kind : {ModelKind::EncDec, ModelKind::RnnSearch}) {
    CAPTURE(model_kind_name(kind));
    Model m = tiny(kind, 23);
    std::vector<std::vector<int>> batch{{4, 5, 6}, {7, 8}};
    Rng rng(31);
    Tensor w = random_weights({2, m.cfg.base_size()}, rng);
    std::vector<Tensor> inputs{m.embedding, m.w_out, m.dec.wz, m.dec.uh, m.w_init, m.enc_bwd.wh};
    auto res = check_gradients(
        [&](Graph& g, std::vector<Tensor>& in) {
          Model q = m;
          q.embedding = in[0];
          q.w_out = in[1];
          q.dec.wz = in[2];
          q.dec.uh = in[3];
          q.w_init = in[4];
          q.enc_bwd.wh = in[5];
          Memory mem = q.encode_source(g, batch);
          BaselineContext ctx(g, q, mem);
          Tensor s = q.initial_state(g, mem);
          auto [s1, p1] = baseline_step(g, {Vocabulary::kBos, Vocabulary::kBos}, s, ctx);
          auto [s2, p2] = baseline_step(g, {4, 7}, s1, ctx);
          (void)s2;
          return add(g, sum_all(g, mul(g, p2, w)), sum_all(g, mul(g, p1, w)));
        },
        inputs);
    CHECK(res.ok);
    CHECK(res.worst_rel < 1e-4);
  }
}

TEST_CASE("model parameter registry is stable and kind-aware") {
  Model cn = tiny(ModelKind::CopyNet);
  Model rs = tiny(ModelKind::RnnSearch);
  Model ed = tiny(ModelKind::EncDec);
  auto names = [](const Model& m) {
    std::vector<std::string> out;
    for (auto& [n, t] : m.parameters()) out.push_back(n);
    return out;
  };
  auto cnn = names(cn);
  CHECK(std::find(cnn.begin(), cnn.end(), "w_copy") != cnn.end());
  auto rsn = names(rs);
  CHECK(std::find(rsn.begin(), rsn.end(), "w_copy") == rsn.end());
  CHECK(std::find(rsn.begin(), rsn.end(), "attn.wa") != rsn.end());
  auto edn = names(ed);
  CHECK(std::find(edn.begin(), edn.end(), "attn.wa") == edn.end());
  CHECK(names(cn) == names(tiny(ModelKind::CopyNet)));
}

TEST_CASE("clone detaches parameter storage") {
  Model m = tiny(ModelKind::CopyNet);
  Model c = m.clone();
  c.w_out.at(0, 4) += 1.0;
  CHECK(m.w_out.at(0, 4) != c.w_out.at(0, 4));
  auto mp = m.parameters();
  auto cp = c.parameters();
  REQUIRE(mp.size() == cp.size());
  for (std::size_t i = 0; i < mp.size(); ++i) CHECK(!mp[i].second.same_storage(cp[i].second));
}
