#include "copyseq/synthdata.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace copyseq {

namespace {

const std::string kTypeNames[] = {"x_to_empty", "x_to_x", "x_to_xx", "xy_to_x", "xy_to_xy"};

constexpr std::size_t kMinRuleLen = 5, kMaxRuleLen = 20;
constexpr std::size_t kMinFill = 1, kMaxFill = 15;
constexpr std::size_t kMinSegment = 1, kMaxSegment = 5;

std::size_t source_var_count(RuleType t) {
  return (t == RuleType::XYtoX || t == RuleType::XYtoXY) ? 2 : 1;
}

// Variable slots of the target pattern, in template order.
std::vector<PatternElem::Kind> target_vars(RuleType t) {
  switch (t) {
    case RuleType::XtoEmpty: return {};
    case RuleType::XtoX: return {PatternElem::Kind::VarX};
    case RuleType::XtoXX: return {PatternElem::Kind::VarX, PatternElem::Kind::VarX};
    case RuleType::XYtoX: return {PatternElem::Kind::VarX};
    case RuleType::XYtoXY: return {PatternElem::Kind::VarX, PatternElem::Kind::VarY};
  }
  return {};
}

std::vector<std::string> random_fill(Rng& rng, std::size_t vocab_size) {
  std::size_t len = kMinFill + rng.index(kMaxFill - kMinFill + 1);
  std::vector<std::string> fill;
  fill.reserve(len);
  for (std::size_t i = 0; i < len; ++i) fill.push_back(symbol_name(static_cast<int>(rng.index(vocab_size))));
  return fill;
}

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out += ' ';
    out += toks[i];
  }
  return out;
}

std::vector<std::string> split_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

const std::string& rule_type_name(RuleType t) { return kTypeNames[static_cast<int>(t)]; }

std::optional<RuleType> parse_rule_type(const std::string& name) {
  for (RuleType t : kAllRuleTypes)
    if (kTypeNames[static_cast<int>(t)] == name) return t;
  return std::nullopt;
}

std::string symbol_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%04d", index);
  return buf;
}

Vocabulary make_symbol_vocab(std::size_t vocab_size) {
  std::vector<std::string> symbols;
  symbols.reserve(vocab_size);
  for (std::size_t i = 0; i < vocab_size; ++i) symbols.push_back(symbol_name(static_cast<int>(i)));
  return Vocabulary(std::move(symbols));
}

std::vector<RuleTemplate> gen_rules(std::uint64_t seed, std::size_t n_rules, std::size_t vocab_size,
                                    const std::array<double, 5>& mix) {
  if (vocab_size < 10) throw ConfigError("gen_rules: vocab_size must be >= 10");
  double total = 0.0;
  std::size_t positive = 0;
  for (double w : mix) {
    if (w < 0) throw ConfigError("gen_rules: negative type weight");
    total += w;
    if (w > 0) ++positive;
  }
  if (total <= 0) throw ConfigError("gen_rules: per-type mix has no positive weight");
  if (n_rules < positive)
    throw ConfigError("gen_rules: " + std::to_string(n_rules) + " rules cannot cover " +
                      std::to_string(positive) + " requested types");

  // Largest-remainder apportionment.
  std::array<std::size_t, 5> counts{};
  std::array<double, 5> frac{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    double share = static_cast<double>(n_rules) * mix[i] / total;
    counts[i] = static_cast<std::size_t>(share);
    frac[i] = share - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 5> order{0, 1, 2, 3, 4};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < n_rules; i = (i + 1) % 5) {
    if (mix[order[i]] > 0) {
      ++counts[order[i]];
      ++assigned;
    }
  }

  Rng rng(derive_seed(seed, "rules"));
  std::vector<RuleTemplate> rules;
  rules.reserve(n_rules);
  int rule_id = 0;
  for (RuleType type : kAllRuleTypes) {
    for (std::size_t r = 0; r < counts[static_cast<std::size_t>(type)]; ++r) {
      RuleTemplate rule;
      rule.rule_id = rule_id++;
      rule.type = type;

      std::size_t len = kMinRuleLen + rng.index(kMaxRuleLen - kMinRuleLen + 1);
      std::size_t nvars = source_var_count(type);
      // distinct variable positions, uniform over position sets
      std::vector<std::size_t> slots(len);
      for (std::size_t i = 0; i < len; ++i) slots[i] = i;
      for (std::size_t i = 0; i < nvars; ++i) std::swap(slots[i], slots[i + rng.index(len - i)]);
      std::vector<std::size_t> vpos(slots.begin(), slots.begin() + nvars);
      std::sort(vpos.begin(), vpos.end());
      bool y_first = nvars == 2 && rng.coin();

      rule.source_pattern.resize(len);
      for (std::size_t i = 0; i < len; ++i)
        rule.source_pattern[i] = {PatternElem::Kind::Literal, static_cast<int>(rng.index(vocab_size))};
      if (nvars == 1) {
        rule.source_pattern[vpos[0]].kind = PatternElem::Kind::VarX;
      } else {
        rule.source_pattern[vpos[0]].kind = y_first ? PatternElem::Kind::VarY : PatternElem::Kind::VarX;
        rule.source_pattern[vpos[1]].kind = y_first ? PatternElem::Kind::VarX : PatternElem::Kind::VarY;
      }

      for (PatternElem::Kind var : target_vars(type)) {
        std::size_t seg = kMinSegment + rng.index(kMaxSegment - kMinSegment + 1);
        for (std::size_t i = 0; i < seg; ++i)
          rule.target_pattern.push_back({PatternElem::Kind::Literal, static_cast<int>(rng.index(vocab_size))});
        rule.target_pattern.push_back({var, 0});
      }
      std::size_t seg = kMinSegment + rng.index(kMaxSegment - kMinSegment + 1);
      for (std::size_t i = 0; i < seg; ++i)
        rule.target_pattern.push_back({PatternElem::Kind::Literal, static_cast<int>(rng.index(vocab_size))});

      rules.push_back(std::move(rule));
    }
  }
  return rules;
}

Instance instantiate(const RuleTemplate& rule, const std::vector<std::string>& x_fill,
                     const std::vector<std::string>& y_fill) {
  Instance inst;
  inst.rule_id = rule.rule_id;
  inst.type = rule.type;
  inst.x_fill = x_fill;
  inst.y_fill = y_fill;
  auto expand = [&](const std::vector<PatternElem>& pattern, std::vector<std::string>& out) {
    for (const PatternElem& e : pattern) {
      switch (e.kind) {
        case PatternElem::Kind::Literal: out.push_back(symbol_name(e.symbol)); break;
        case PatternElem::Kind::VarX: out.insert(out.end(), x_fill.begin(), x_fill.end()); break;
        case PatternElem::Kind::VarY: out.insert(out.end(), y_fill.begin(), y_fill.end()); break;
      }
    }
  };
  expand(rule.source_pattern, inst.source);
  expand(rule.target_pattern, inst.target);
  return inst;
}

std::vector<Instance> gen_instances(const RuleTemplate& rule, std::size_t n, std::uint64_t seed,
                                    std::size_t vocab_size) {
  if (n < 1) throw ConfigError("gen_instances: n must be >= 1");
  Rng rng(derive_seed(seed, "instances", static_cast<std::uint64_t>(rule.rule_id)));
  bool needs_y = source_var_count(rule.type) == 2;
  std::vector<Instance> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> x = random_fill(rng, vocab_size);
    std::vector<std::string> y = needs_y ? random_fill(rng, vocab_size) : std::vector<std::string>{};
    out.push_back(instantiate(rule, x, y));
  }
  return out;
}

std::pair<std::vector<Instance>, std::vector<Instance>> split_dataset(const std::vector<Instance>& instances,
                                                                      const std::vector<RuleTemplate>& rules,
                                                                      double train_frac, SplitMode mode,
                                                                      std::uint64_t seed,
                                                                      std::size_t vocab_size) {
  std::vector<std::size_t> idx(instances.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "split"));
  shuffle(idx, rng);
  std::size_t n_train = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(idx.size()),
                       std::max(0.0, static_cast<double>(idx.size()) * train_frac + 0.5)));
  std::vector<Instance> train, test;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < n_train ? train : test).push_back(instances[idx[i]]);

  if (mode == SplitMode::DisjointFillers) {
    if (vocab_size == 0) throw ConfigError("split_dataset: disjoint_fillers needs the vocab size");
    std::set<std::string> train_fills;
    for (const Instance& inst : train) {
      if (inst.x_fill.empty() && inst.y_fill.empty())
        throw ConfigError("split_dataset: disjoint_fillers requires instances carrying realizations");
      if (!inst.x_fill.empty()) train_fills.insert(join(inst.x_fill));
      if (!inst.y_fill.empty()) train_fills.insert(join(inst.y_fill));
    }
    auto rule_by_id = [&](int id) -> const RuleTemplate& {
      for (const RuleTemplate& r : rules)
        if (r.rule_id == id) return r;
      throw ConfigError("split_dataset: instance references unknown rule " + std::to_string(id));
    };
    for (Instance& inst : test) {
      const RuleTemplate& rule = rule_by_id(inst.rule_id);
      bool needs_y = source_var_count(rule.type) == 2;
      std::vector<std::string> x = inst.x_fill, y = inst.y_fill;
      while (train_fills.count(join(x)) || (needs_y && train_fills.count(join(y)))) {
        if (train_fills.count(join(x))) x = random_fill(rng, vocab_size);
        if (needs_y && train_fills.count(join(y))) y = random_fill(rng, vocab_size);
      }
      if (x != inst.x_fill || y != inst.y_fill) inst = instantiate(rule, x, y);
    }
  }
  return {std::move(train), std::move(test)};
}

void write_dataset(const std::string& path, const std::vector<Instance>& instances) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_dataset: cannot write " + path);
  for (const Instance& inst : instances) {
    out << join(inst.source) << '\t' << join(inst.target);
    if (inst.rule_id >= 0 && inst.type)
      out << '\t' << inst.rule_id << '\t' << rule_type_name(*inst.type);
    out << '\n';
  }
}

std::vector<Instance> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("read_dataset: cannot open " + path);
  std::vector<Instance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() < 2)
      throw ConfigError("read_dataset: line " + std::to_string(lineno) + " has no target column");
    Instance inst;
    inst.source = split_tokens(cols[0]);
    inst.target = split_tokens(cols[1]);
    if (cols.size() >= 4) {
      inst.rule_id = std::stoi(cols[2]);
      auto t = parse_rule_type(cols[3]);
      if (!t) throw ConfigError("read_dataset: unknown rule type '" + cols[3] + "'");
      inst.type = *t;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<RuleTemplate>& rules) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_manifest: cannot write " + path);
  auto render = [](const std::vector<PatternElem>& pattern) {
    std::string s;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      if (i) s += ' ';
      switch (pattern[i].kind) {
        case PatternElem::Kind::Literal: s += symbol_name(pattern[i].symbol); break;
        case PatternElem::Kind::VarX: s += "X"; break;
        case PatternElem::Kind::VarY: s += "Y"; break;
      }
    }
    return s;
  };
  for (const RuleTemplate& r : rules)
    out << r.rule_id << '\t' << rule_type_name(r.type) << '\t' << render(r.source_pattern) << '\t'
        << render(r.target_pattern) << '\n';
}

}  // namespace copyseq
