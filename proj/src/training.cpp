#include "copyseq/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "copyseq/baselines.hpp"
#include "copyseq/checkpoint.hpp"
#include "copyseq/decoding.hpp"
#include "copyseq/threading.hpp"

namespace copyseq {

TargetBatch make_target_batch(const std::vector<std::vector<int>>& target_ids, std::size_t max_unroll) {
  TargetBatch tb;
  tb.batch = target_ids.size();
  std::size_t longest = 0;
  for (const auto& row : target_ids) {
    if (row.size() > max_unroll)
      throw ConfigError("target of length " + std::to_string(row.size()) + " exceeds max unroll " +
                        std::to_string(max_unroll));
    longest = std::max(longest, row.size());
  }
  tb.steps = longest + 1;  // EOS step
  tb.labels.assign(tb.steps, std::vector<int>(tb.batch, Vocabulary::kEos));
  tb.inputs.assign(tb.steps, std::vector<int>(tb.batch, Vocabulary::kBos));
  tb.mask.reserve(tb.steps);
  for (std::size_t t = 0; t < tb.steps; ++t) {
    Tensor m = Tensor::zeros({tb.batch, 1});
    for (std::size_t b = 0; b < tb.batch; ++b) {
      const auto& row = target_ids[b];
      if (t < row.size()) {
        tb.labels[t][b] = row[t];
        m.at(b, 0) = 1.0;
      } else if (t == row.size()) {
        m.at(b, 0) = 1.0;  // the EOS step counts
      }
      if (t > 0) tb.inputs[t][b] = tb.labels[t - 1][b];
    }
    tb.mask.push_back(m);
  }
  return tb;
}

Tensor nll_loss(Graph& g, const std::vector<Tensor>& step_probs, const TargetBatch& targets) {
  if (step_probs.size() != targets.steps)
    throw DimensionError("nll_loss: " + std::to_string(step_probs.size()) + " step outputs for " +
                         std::to_string(targets.steps) + " target steps");
  Tensor total = Tensor::zeros({1});
  for (std::size_t t = 0; t < targets.steps; ++t) {
    Tensor picked = pick_per_row(g, step_probs[t], targets.labels[t]);
    Tensor lp = log(g, picked);
    total = add(g, total, sum_all(g, mul(g, lp, targets.mask[t])));
  }
  return scale(g, total, -1.0 / static_cast<double>(targets.batch));
}

Tensor nll_loss(Graph& g, const std::vector<MixtureOutput>& steps, const TargetBatch& targets) {
  std::vector<Tensor> probs;
  probs.reserve(steps.size());
  for (const MixtureOutput& m : steps) probs.push_back(m.probs);
  return nll_loss(g, probs, targets);
}

std::vector<Tensor> forward_teacher(Graph& g, const Model& model, const BatchSource& src,
                                    const TargetBatch& targets) {
  Memory mem = model.encode_source(g, src.base_ids);
  Tensor s0 = model.initial_state(g, mem);
  std::vector<Tensor> probs;
  probs.reserve(targets.steps);
  if (model.cfg.kind == ModelKind::CopyNet) {
    CopyDecoderContext ctx(g, mem, model.attn, model.w_copy, model.dec, model.embedding, model.w_out,
                           src.ext_ids, src.extended_size(model.cfg.base_size()));
    DecoderState state = initial_decoder_state(s0, mem.batch, mem.steps);
    for (std::size_t t = 0; t < targets.steps; ++t) {
      auto [next, mix] = decoder_step(g, targets.inputs[t], state, ctx);
      state = next;
      probs.push_back(mix.probs);
    }
  } else {
    BaselineContext ctx(g, model, mem);
    Tensor s = s0;
    for (std::size_t t = 0; t < targets.steps; ++t) {
      auto [s_t, p] = baseline_step(g, targets.inputs[t], s, ctx);
      s = s_t;
      probs.push_back(p);
    }
  }
  return probs;
}

std::vector<std::vector<int>> map_targets_for_model(const Model& model, const Vocabulary& vocab,
                                                    const BatchSource& src,
                                                    const std::vector<const std::vector<std::string>*>& targets) {
  std::vector<std::vector<int>> out;
  out.reserve(targets.size());
  for (std::size_t b = 0; b < targets.size(); ++b) {
    if (model.cfg.kind == ModelKind::CopyNet) {
      out.push_back(map_target(src.exts[b], *targets[b]));
    } else {
      std::vector<int> ids;
      ids.reserve(targets[b]->size());
      for (const std::string& tok : *targets[b]) ids.push_back(vocab.id_of(tok));
      out.push_back(std::move(ids));
    }
  }
  return out;
}

double clip_global_norm(const std::vector<std::pair<std::string, Tensor>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    (void)name;
    if (!t.has_grad()) continue;
    for (double gv : t.grad_view()) sq += gv * gv;
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double factor = max_norm / norm;
    for (const auto& [name, t] : params) {
      (void)name;
      if (!t.has_grad()) continue;
      for (double& gv : t.grad()) gv *= factor;
    }
  }
  return norm;
}

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& [name, t] : params_) {
    (void)name;
    m_.push_back(Tensor::zeros(t.shape()));
    v_.push_back(Tensor::zeros(t.shape()));
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    if (!p.has_grad()) continue;
    const auto& grad = p.grad_view();
    double* m = m_[i].data();
    double* v = v_[i].data();
    double* w = p.data();
    for (std::size_t j = 0; j < grad.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
      w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
    }
    p.zero_grad();
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(2 * params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.emplace_back("adam.m." + params_[i].first, m_[i]);
    out.emplace_back("adam.v." + params_[i].first, v_[i]);
  }
  return out;
}

namespace {

double dev_exact_match(const Model& model, const Vocabulary& vocab, const std::vector<Instance>& dev,
                       std::size_t beam, std::size_t threads) {
  if (dev.empty()) return 0.0;
  std::vector<unsigned char> hits(dev.size(), 0);
  parallel_for(dev.size(), threads, [&](std::size_t i) {
    DecodeResult res = decode_instance(model, vocab, dev[i].source, beam);
    hits[i] = !res.tokens.empty() && exact_match(res.tokens[0], dev[i].target) ? 1 : 0;
  });
  std::size_t n = 0;
  for (unsigned char h : hits) n += h;
  return static_cast<double>(n) / static_cast<double>(dev.size());
}

void append_metrics(const std::string& dir, std::size_t epoch, const char* split, double loss, double em,
                    bool has_loss, bool has_em) {
  if (dir.empty()) return;
  std::ofstream out(dir + "/metrics.tsv", std::ios::app);
  out << epoch << '\t' << split << '\t';
  if (has_loss)
    out << loss;
  else
    out << '-';
  out << '\t';
  if (has_em)
    out << em;
  else
    out << '-';
  out << '\n';
}

}  // namespace

TrainResult train(Model& model, const TrainConfig& cfg, const Vocabulary& vocab,
                  const std::vector<Instance>& train_set, const std::vector<Instance>& dev_set,
                  const TrainOptions& opts) {
  if (train_set.empty()) throw ConfigError("train: empty training set");
  if (cfg.batch_size == 0) throw ConfigError("train: batch_size must be positive");

  auto params = model.parameters();
  Adam adam(params, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Rng rng(derive_seed(cfg.seed, "train"));

  TrainResult result;
  result.best = model.clone();
  std::size_t start_epoch = 0, stale = 0;
  double best_em = -1.0;
  std::size_t best_epoch = 0;

  if (!opts.resume_from.empty()) {
    LoadedCheckpoint ckpt = load_checkpoint(opts.resume_from);
    if (!(ckpt.model.cfg == model.cfg))
      throw VersionError("train: resume checkpoint was built for a different model configuration");
    if (!ckpt.has_trainer) throw VersionError("train: checkpoint has no trainer state to resume from");
    auto src = ckpt.model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].second.values() = src[i].second.values();
    for (auto& [name, t] : adam.state()) {
      auto it = ckpt.extra.find(name);
      if (it == ckpt.extra.end()) throw VersionError("train: checkpoint misses optimizer state " + name);
      t.values() = it->second.values();
    }
    adam.set_steps_taken(ckpt.trainer.adam_step);
    std::istringstream is(ckpt.trainer.rng_state);
    is >> rng.engine();
    start_epoch = ckpt.trainer.epoch;
    best_em = ckpt.trainer.best_dev_em;
    best_epoch = ckpt.trainer.best_epoch;
    stale = ckpt.trainer.stale_epochs;
    result.best = model.clone();
  }

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  if (!opts.out_dir.empty()) std::filesystem::create_directories(opts.out_dir);

  for (std::size_t epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    // identity first: the epoch's order is a pure function of the rng state
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
      std::size_t bsz = std::min(cfg.batch_size, order.size() - at);
      std::vector<const std::vector<std::string>*> sources, targets;
      sources.reserve(bsz);
      targets.reserve(bsz);
      for (std::size_t i = 0; i < bsz; ++i) {
        const Instance& inst = train_set[order[at + i]];
        sources.push_back(&inst.source);
        targets.push_back(&inst.target);
      }
      BatchSource src = make_batch_source(vocab, sources);
      TargetBatch tb = make_target_batch(map_targets_for_model(model, vocab, src, targets), cfg.max_target_len);

      Graph g;
      Tensor loss = nll_loss(g, forward_teacher(g, model, src, tb), tb);
      double loss_val = loss.item();
      if (!std::isfinite(loss_val))
        throw Error("training diverged: loss " + std::to_string(loss_val) + " at epoch " +
                    std::to_string(epoch + 1) + ", batch offset " + std::to_string(at));
      g.backward(loss);
      clip_global_norm(params, cfg.clip_norm);
      adam.step();
      loss_sum += loss_val * static_cast<double>(bsz);
      seen += bsz;
    }
    double train_loss = loss_sum / static_cast<double>(seen);
    double dev_em = dev_exact_match(model, vocab, dev_set, cfg.beam_dev, opts.dev_threads);
    result.history.push_back({epoch + 1, train_loss, dev_em});
    if (opts.log)
      (*opts.log) << "epoch " << (epoch + 1) << "  train_loss " << train_loss << "  dev_em " << dev_em
                  << "\n";
    append_metrics(opts.out_dir, epoch + 1, "train", train_loss, 0, true, false);
    append_metrics(opts.out_dir, epoch + 1, "dev", 0, dev_em, false, true);

    if (dev_em > best_em) {
      best_em = dev_em;
      best_epoch = epoch + 1;
      stale = 0;
      result.best = model.clone();
      if (!opts.out_dir.empty()) save_checkpoint(opts.out_dir + "/best.ckpt", result.best);
    } else {
      ++stale;
    }
    if (!opts.out_dir.empty()) {
      TrainerState ts;
      ts.epoch = epoch + 1;
      ts.adam_step = adam.steps_taken();
      ts.best_dev_em = best_em;
      ts.best_epoch = best_epoch;
      ts.stale_epochs = stale;
      std::ostringstream os;
      os << rng.engine();
      ts.rng_state = os.str();
      auto extra = adam.state();
      save_checkpoint(opts.out_dir + "/last.ckpt", model, &ts, &extra);
    }
    result.epochs_run = epoch + 1;
    if (dev_em >= 1.0 || stale >= cfg.patience) break;
  }
  result.best_epoch = best_epoch;
  result.best_dev_em = std::max(best_em, 0.0);
  return result;
}

}  // namespace copyseq
