#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "copyseq/errors.hpp"

namespace copyseq {

// Fixed symbol table with four reserved specials at ids 0..3. Immutable after
// construction; freely shareable.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kSpecials = 4;

  explicit Vocabulary(std::vector<std::string> regular_symbols);

  // File format: one regular symbol per line; line number + 4 = id.
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  // Copy of this vocabulary truncated to its first `n` regular symbols.
  Vocabulary truncated(std::size_t n) const;

  std::size_t regular_count() const { return tokens_.size() - kSpecials; }  // N
  std::size_t base_size() const { return tokens_.size(); }                  // N + 4

  // Unknown strings map to UNK, never an error.
  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token_of(int id) const;

 private:
  std::vector<std::string> tokens_;  // specials at 0..3, regular symbols after
  std::unordered_map<std::string, int> index_;
};

// Per-instance extension of a base vocabulary with the source's
// out-of-vocabulary tokens, slot order = first occurrence in the source.
struct ExtendedVocab {
  const Vocabulary* base = nullptr;
  std::vector<std::string> oov_symbols;            // X \ V in first-occurrence order
  std::unordered_map<std::string, int> oov_slots;  // token -> extended id

  std::size_t size() const { return base->base_size() + oov_symbols.size(); }

  // token in V -> base id; token in X\V -> its slot; otherwise UNK.
  int extended_id(const std::string& token) const;

  // Inverse of extended_id for every id except UNK.
  const std::string& render(int ext_id) const;
};

struct ExtendedSource {
  ExtendedVocab ext;
  std::vector<int> base_ids;  // OOVs as UNK
  std::vector<int> ext_ids;   // OOVs as their slots
};

ExtendedSource build_extended(const Vocabulary& vocab, const std::vector<std::string>& source);

// Training labels over the extended id space.
std::vector<int> map_target(const ExtendedVocab& ext, const std::vector<std::string>& target);

}  // namespace copyseq
