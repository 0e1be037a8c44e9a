#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "copyseq/rng.hpp"
#include "copyseq/vocab.hpp"

namespace copyseq {

// The five rule shapes of the synthetic transduction benchmark.
enum class RuleType { XtoEmpty, XtoX, XtoXX, XYtoX, XYtoXY };

inline constexpr std::array<RuleType, 5> kAllRuleTypes = {RuleType::XtoEmpty, RuleType::XtoX, RuleType::XtoXX,
                                                          RuleType::XYtoX, RuleType::XYtoXY};

const std::string& rule_type_name(RuleType t);
std::optional<RuleType> parse_rule_type(const std::string& name);

struct PatternElem {
  enum class Kind { Literal, VarX, VarY };
  Kind kind = Kind::Literal;
  int symbol = 0;  // regular-symbol index, literals only
};

struct RuleTemplate {
  int rule_id = 0;
  RuleType type = RuleType::XtoX;
  std::vector<PatternElem> source_pattern;  // 5..20 elements, variables count as one
  std::vector<PatternElem> target_pattern;
};

struct Instance {
  std::vector<std::string> source, target;
  int rule_id = -1;
  std::optional<RuleType> type;
  std::vector<std::string> x_fill, y_fill;  // variable realizations, 1..15 symbols
};

// Symbol strings are "w%04d" over the regular-symbol index.
std::string symbol_name(int index);
Vocabulary make_symbol_vocab(std::size_t vocab_size);

// Deterministic rule sampling; counts per type follow largest-remainder
// apportionment of `mix` (canonical type order breaks ties). ConfigError on
// vocab_size < 10, nonpositive mix, or n_rules below the positive-type count.
std::vector<RuleTemplate> gen_rules(std::uint64_t seed, std::size_t n_rules, std::size_t vocab_size,
                                    const std::array<double, 5>& mix = {1, 1, 1, 1, 1});

// Fills a template with the given realizations (the substitution the whole
// benchmark is defined by; also used by tests as the brute-force oracle).
Instance instantiate(const RuleTemplate& rule, const std::vector<std::string>& x_fill,
                     const std::vector<std::string>& y_fill);

std::vector<Instance> gen_instances(const RuleTemplate& rule, std::size_t n, std::uint64_t seed,
                                    std::size_t vocab_size);

enum class SplitMode { SharedPool, DisjointFillers };

// shared_pool: seeded shuffle then cut. disjoint_fillers: additionally
// regenerates test-side realizations until no realization string appears in
// both halves (requires instances carrying fills and their templates).
std::pair<std::vector<Instance>, std::vector<Instance>> split_dataset(const std::vector<Instance>& instances,
                                                                      const std::vector<RuleTemplate>& rules,
                                                                      double train_frac, SplitMode mode,
                                                                      std::uint64_t seed,
                                                                      std::size_t vocab_size = 0);

// One instance per line: source tokens, TAB, target tokens, TAB, rule id,
// TAB, rule type name.
void write_dataset(const std::string& path, const std::vector<Instance>& instances);

// Reads the format above; the two rule columns are optional so any tokenized
// parallel corpus loads.
std::vector<Instance> read_dataset(const std::string& path);

// Manifest of templates: rule id, type, patterns with X / Y markers.
void write_manifest(const std::string& path, const std::vector<RuleTemplate>& rules);

}  // namespace copyseq
