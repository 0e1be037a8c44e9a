#include "copyseq/vocab.hpp"

#include <fstream>

namespace copyseq {

namespace {
const char* kSpecialNames[] = {"<pad>", "<s>", "</s>", "<unk>"};
}

Vocabulary::Vocabulary(std::vector<std::string> regular_symbols) {
  tokens_.reserve(regular_symbols.size() + kSpecials);
  for (const char* s : kSpecialNames) tokens_.emplace_back(s);
  for (auto& s : regular_symbols) tokens_.push_back(std::move(s));
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw ConfigError("vocabulary: duplicate symbol '" + tokens_[i] + "'");
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("vocabulary: cannot open " + path);
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) symbols.push_back(line);
  }
  return Vocabulary(std::move(symbols));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("vocabulary: cannot write " + path);
  for (std::size_t i = kSpecials; i < tokens_.size(); ++i) out << tokens_[i] << "\n";
}

Vocabulary Vocabulary::truncated(std::size_t n) const {
  if (n > regular_count()) throw ConfigError("vocabulary: cannot truncate to " + std::to_string(n));
  std::vector<std::string> symbols(tokens_.begin() + kSpecials, tokens_.begin() + kSpecials + n);
  return Vocabulary(std::move(symbols));
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw IndexError("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

int ExtendedVocab::extended_id(const std::string& token) const {
  if (base->contains(token)) return base->id_of(token);
  auto it = oov_slots.find(token);
  return it == oov_slots.end() ? Vocabulary::kUnk : it->second;
}

const std::string& ExtendedVocab::render(int ext_id) const {
  if (ext_id >= 0 && static_cast<std::size_t>(ext_id) < base->base_size()) return base->token_of(ext_id);
  std::size_t slot = static_cast<std::size_t>(ext_id) - base->base_size();
  if (ext_id < 0 || slot >= oov_symbols.size())
    throw IndexError("extended vocab: id " + std::to_string(ext_id) + " out of range");
  return oov_symbols[slot];
}

ExtendedSource build_extended(const Vocabulary& vocab, const std::vector<std::string>& source) {
  if (source.empty()) throw ConfigError("build_extended: empty source");
  ExtendedSource out;
  out.ext.base = &vocab;
  out.base_ids.reserve(source.size());
  out.ext_ids.reserve(source.size());
  for (const std::string& tok : source) {
    int base_id = vocab.id_of(tok);
    out.base_ids.push_back(base_id);
    if (vocab.contains(tok)) {
      out.ext_ids.push_back(base_id);
      continue;
    }
    auto it = out.ext.oov_slots.find(tok);
    if (it == out.ext.oov_slots.end()) {
      int slot = static_cast<int>(vocab.base_size() + out.ext.oov_symbols.size());
      out.ext.oov_symbols.push_back(tok);
      it = out.ext.oov_slots.emplace(tok, slot).first;
    }
    out.ext_ids.push_back(it->second);
  }
  return out;
}

std::vector<int> map_target(const ExtendedVocab& ext, const std::vector<std::string>& target) {
  std::vector<int> ids;
  ids.reserve(target.size());
  for (const std::string& tok : target) ids.push_back(ext.extended_id(tok));
  return ids;
}

}  // namespace copyseq
