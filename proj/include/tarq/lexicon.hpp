#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tarq/stats.hpp"

namespace tarq {

class FreqTable {
 public:
  FreqTable() = default;
  // `total` defaults to the sum of counts. Keys are lowercased on insert.
  explicit FreqTable(std::unordered_map<std::string, std::uint64_t> counts,
                     std::optional<std::uint64_t> total = std::nullopt);

  // Lines "word<TAB>count"; an optional "#total <int>" line overrides the sum.
  static FreqTable parse(std::istream& in);
  static FreqTable load(const std::string& path);

  std::uint64_t count(std::string_view word) const;
  std::uint64_t total() const { return total_; }
  std::size_t size() const { return counts_.size(); }

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct Utterance {
  std::string id;
  std::vector<std::string> words;
};

using Corpus = std::vector<Utterance>;

// Lowercase, strip ASCII punctuation, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

// Lines "id<TAB>text".
Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::string& path);

// log10(count / total * 1e9); nullopt for unseen words.
std::optional<double> zipf_score(std::string_view word, const FreqTable& table);

// Tail when the score is strictly below the threshold or the word is unseen.
Tag tag_word(std::string_view word, const FreqTable& table, double threshold);

// Share of tail-tagged words. Throws EmptyUtterance on an empty word list.
double rare_density(const Utterance& utt, const FreqTable& table, double threshold);

enum class PoolKind { kTop, kMix, kCross };

std::optional<PoolKind> parse_pool_kind(std::string_view name);
std::string_view pool_kind_name(PoolKind kind);

struct PoolEntry {
  std::size_t source = 0;
  std::size_t index = 0;  // position within its source corpus
  double density = 0.0;
  const Utterance* utterance = nullptr;  // points into the `sources` passed to build_pool
};

struct Pool {
  std::vector<PoolEntry> entries;  // selection order
  std::size_t staged_per_source = 0;  // r_cross candidate count per source, else 0
};

// ceil(4N/3), the per-source candidate count for r_cross.
std::size_t cross_stage_size(std::size_t n);

// r_top: top-N by density. r_mix: top-ceil(N/2) plus floor(N/2) drawn uniformly
// from the rest. r_cross: top-ceil(4N/3) per source, then top-N overall. Ties
// go to the lower (source, index). Throws InsufficientCorpus when a source has
// fewer than N utterances or the source count does not fit the kind.
Pool build_pool(const std::vector<Corpus>& sources, PoolKind kind, std::size_t n,
                std::uint64_t seed, const FreqTable& table, double threshold);

}  // namespace tarq
