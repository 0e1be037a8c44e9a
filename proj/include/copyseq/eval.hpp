#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "copyseq/decoding.hpp"
#include "copyseq/synthdata.hpp"

namespace copyseq {

struct EvalOptions {
  std::size_t beam = 10;
  std::vector<std::size_t> topk = {1, 10};
  std::size_t threads = 0;     // 0 = COPYSEQ_THREADS / hardware
  std::size_t max_len = 0;     // 0 = 2 * source + 5
  bool diagnostics = true;     // location-addressing stats (CopyNet only)
};

struct InstanceEval {
  bool match_top1 = false;
  std::vector<unsigned char> match_topk;
  double top1_logprob = 0.0;
  std::vector<std::string> top1_tokens;
  std::optional<RuleType> type;
  // location diagnostics along the top-1 path
  double sum_max_rho = 0.0;
  std::size_t copy_steps = 0;
  std::size_t advance_pairs = 0, advance_hits = 0;
};

struct TypeAccuracy {
  std::size_t count = 0;
  std::vector<std::size_t> hits;  // aligned with EvalOptions::topk
};

struct EvalReport {
  std::vector<std::size_t> topk;
  std::map<std::string, TypeAccuracy> per_type;
  TypeAccuracy all;
  // reported, not gated: rho concentration and +1 movement of the copy head
  double mean_max_rho = 0.0;
  double copy_advance_frac = 0.0;
  std::size_t copy_steps = 0, advance_pairs = 0;

  double accuracy(const std::string& type_name, std::size_t k) const;
  double accuracy_all(std::size_t k) const;
};

EvalReport evaluate(const Model& model, const Vocabulary& vocab, const std::vector<Instance>& data,
                    const EvalOptions& opts, std::vector<InstanceEval>* details = nullptr);

// Table-style TSV: one accuracy row per requested k, columns in the fixed
// rule-type order plus "all".
std::string format_report(const EvalReport& report);

// source, gold, top-1 prediction, top-1 log-prob, match flag
void write_decode_tsv(std::ostream& out, const std::vector<Instance>& data,
                      const std::vector<InstanceEval>& details);

// Per-step record of the top-k extended tokens with generate/copy shares and
// the copy heat over source positions (top-1 path of each instance).
void dump_copy_heat(std::ostream& out, const Model& model, const Vocabulary& vocab,
                    const std::vector<Instance>& data, std::size_t beam, std::size_t k = 5);

}  // namespace copyseq
