#include "copyseq/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "copyseq/threading.hpp"

namespace copyseq {

namespace {

// rho over matching positions at one emitted step; returns (max rho, argmax).
std::pair<double, std::size_t> rho_peak(const std::vector<double>& copy_by_pos,
                                        const std::vector<int>& src_ext_ids, int token) {
  double total = 0.0;
  for (std::size_t t = 0; t < src_ext_ids.size(); ++t)
    if (src_ext_ids[t] == token) total += copy_by_pos[t];
  double best = -1.0;
  std::size_t pos = 0;
  std::size_t matches = 0;
  for (std::size_t t = 0; t < src_ext_ids.size(); ++t) {
    if (src_ext_ids[t] != token) continue;
    ++matches;
    double r = total > 0 ? copy_by_pos[t] / total : 0.0;
    if (r > best) {
      best = r;
      pos = t;
    }
  }
  if (matches == 0) return {-1.0, 0};
  if (total <= 0) return {1.0 / static_cast<double>(matches), pos};
  return {best, pos};
}

InstanceEval eval_one(const Model& model, const Vocabulary& vocab, const Instance& inst,
                      const EvalOptions& opts) {
  InstanceEval ev;
  ev.type = inst.type;
  ModelDecodeSession session(model, vocab, inst.source);
  std::size_t max_len = opts.max_len ? opts.max_len : 2 * inst.source.size() + 5;
  auto hyps = beam_decode(session, opts.beam, max_len);
  ev.match_topk.assign(opts.topk.size(), 0);
  for (std::size_t h = 0; h < hyps.size(); ++h) {
    std::vector<std::string> toks = render_ids(session.extended(), hyps[h].ids);
    bool match = exact_match(toks, inst.target);
    if (h == 0) {
      ev.match_top1 = match;
      ev.top1_logprob = hyps[h].log_prob;
      ev.top1_tokens = toks;
    }
    if (!match) continue;
    for (std::size_t i = 0; i < opts.topk.size(); ++i)
      if (h < opts.topk[i]) ev.match_topk[i] = 1;
  }

  if (opts.diagnostics && model.cfg.kind == ModelKind::CopyNet && !hyps.empty()) {
    std::vector<int> src_ids = build_extended(vocab, inst.source).ext_ids;
    const Hypothesis& top = hyps[0];
    bool prev_copy = false;
    std::size_t prev_pos = 0;
    for (std::size_t t = 0; t < top.ids.size(); ++t) {
      DecodeSession::MixInfo info;
      if (!session.mixture_info(top.states[t], &info)) break;
      auto [mx, pos] = rho_peak(info.copy_by_pos, src_ids, top.ids[t]);
      bool is_copy = mx >= 0.0;
      if (is_copy) {
        ev.sum_max_rho += mx;
        ev.copy_steps += 1;
        if (prev_copy) {
          ev.advance_pairs += 1;
          if (pos == prev_pos + 1) ev.advance_hits += 1;
        }
        prev_pos = pos;
      }
      prev_copy = is_copy;
    }
  }
  return ev;
}

}  // namespace

double EvalReport::accuracy(const std::string& type_name, std::size_t k) const {
  auto it = per_type.find(type_name);
  if (it == per_type.end() || it->second.count == 0) return -1.0;
  for (std::size_t i = 0; i < topk.size(); ++i)
    if (topk[i] == k)
      return static_cast<double>(it->second.hits[i]) / static_cast<double>(it->second.count);
  return -1.0;
}

double EvalReport::accuracy_all(std::size_t k) const {
  if (all.count == 0) return -1.0;
  for (std::size_t i = 0; i < topk.size(); ++i)
    if (topk[i] == k) return static_cast<double>(all.hits[i]) / static_cast<double>(all.count);
  return -1.0;
}

EvalReport evaluate(const Model& model, const Vocabulary& vocab, const std::vector<Instance>& data,
                    const EvalOptions& opts, std::vector<InstanceEval>* details) {
  std::vector<InstanceEval> evals(data.size());
  parallel_for(data.size(), opts.threads, [&](std::size_t i) { evals[i] = eval_one(model, vocab, data[i], opts); });

  EvalReport report;
  report.topk = opts.topk;
  report.all.hits.assign(opts.topk.size(), 0);
  for (const InstanceEval& ev : evals) {
    std::string key = ev.type ? rule_type_name(*ev.type) : "untyped";
    TypeAccuracy& acc = report.per_type[key];
    if (acc.hits.empty()) acc.hits.assign(opts.topk.size(), 0);
    acc.count += 1;
    report.all.count += 1;
    for (std::size_t i = 0; i < opts.topk.size(); ++i) {
      acc.hits[i] += ev.match_topk[i];
      report.all.hits[i] += ev.match_topk[i];
    }
    report.copy_steps += ev.copy_steps;
    report.advance_pairs += ev.advance_pairs;
    report.mean_max_rho += ev.sum_max_rho;
    report.copy_advance_frac += static_cast<double>(ev.advance_hits);
  }
  report.mean_max_rho = report.copy_steps ? report.mean_max_rho / static_cast<double>(report.copy_steps) : 0.0;
  report.copy_advance_frac =
      report.advance_pairs ? report.copy_advance_frac / static_cast<double>(report.advance_pairs) : 0.0;
  if (details) *details = std::move(evals);
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream os;
  os << "metric";
  for (RuleType t : kAllRuleTypes) os << '\t' << rule_type_name(t);
  os << "\tall\n";
  auto cell = [&](double v) {
    if (v < 0)
      os << "\t-";
    else {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "\t%.1f", 100.0 * v);
      os << buf;
    }
  };
  for (std::size_t i = 0; i < report.topk.size(); ++i) {
    os << "top" << report.topk[i];
    for (RuleType t : kAllRuleTypes) cell(report.accuracy(rule_type_name(t), report.topk[i]));
    cell(report.accuracy_all(report.topk[i]));
    os << '\n';
  }
  os << "count";
  for (RuleType t : kAllRuleTypes) {
    auto it = report.per_type.find(rule_type_name(t));
    os << '\t' << (it == report.per_type.end() ? 0 : it->second.count);
  }
  os << '\t' << report.all.count << '\n';
  return os.str();
}

void write_decode_tsv(std::ostream& out, const std::vector<Instance>& data,
                      const std::vector<InstanceEval>& details) {
  auto join = [](const std::vector<std::string>& toks) {
    std::string s;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i) s += ' ';
      s += toks[i];
    }
    return s;
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << join(data[i].source) << '\t' << join(data[i].target) << '\t' << join(details[i].top1_tokens)
        << '\t' << details[i].top1_logprob << '\t' << (details[i].match_top1 ? 1 : 0) << '\n';
  }
}

void dump_copy_heat(std::ostream& out, const Model& model, const Vocabulary& vocab,
                    const std::vector<Instance>& data, std::size_t beam, std::size_t k) {
  out << "instance\tstep\trank\ttoken\tp_total\tp_gen\tp_copy\theat\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    ModelDecodeSession session(model, vocab, data[i].source);
    auto hyps = beam_decode(session, beam, 2 * data[i].source.size() + 5);
    if (hyps.empty()) continue;
    const Hypothesis& top = hyps[0];
    const std::size_t base = model.cfg.base_size();
    for (std::size_t t = 0; t < top.ids.size(); ++t) {
      DecodeSession::MixInfo info;
      if (!session.mixture_info(top.states[t], &info)) break;
      std::vector<std::size_t> order(info.probs.size());
      for (std::size_t e = 0; e < order.size(); ++e) order[e] = e;
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return info.probs[a] > info.probs[b]; });
      for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
        std::size_t e = order[r];
        double gen = e < base ? info.gen_probs[e] : 0.0;
        out << i << '\t' << t << '\t' << (r + 1) << '\t'
            << session.extended().render(static_cast<int>(e)) << '\t' << info.probs[e] << '\t' << gen
            << '\t' << (info.probs[e] - gen) << '\t';
        if (r == 0) {
          for (std::size_t p = 0; p < info.copy_by_pos.size(); ++p)
            out << (p ? " " : "") << info.copy_by_pos[p];
        } else {
          out << '-';
        }
        out << '\n';
      }
    }
  }
}

}  // namespace copyseq
