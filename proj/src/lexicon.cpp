#include "tarq/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tarq/rng.hpp"

namespace tarq {
namespace {

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool denser(const PoolEntry& a, const PoolEntry& b) {
  if (a.density != b.density) return a.density > b.density;
  if (a.source != b.source) return a.source < b.source;
  return a.index < b.index;
}

std::vector<PoolEntry> score_source(const Corpus& corpus, std::size_t source,
                                    const FreqTable& table, double threshold) {
  std::vector<PoolEntry> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.push_back({source, i, rare_density(corpus[i], table, threshold), &corpus[i]});
  }
  std::sort(out.begin(), out.end(), denser);
  return out;
}

}  // namespace

FreqTable::FreqTable(std::unordered_map<std::string, std::uint64_t> counts,
                     std::optional<std::uint64_t> total) {
  std::uint64_t sum = 0;
  for (auto& [word, c] : counts) {
    counts_[lowercase(word)] += c;
    sum += c;
  }
  total_ = total.value_or(sum);
}

FreqTable FreqTable::parse(std::istream& in) {
  std::unordered_map<std::string, std::uint64_t> counts;
  std::optional<std::uint64_t> total;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("#total", 0) == 0) {
      std::istringstream ss(line.substr(6));
      std::uint64_t t = 0;
      if (!(ss >> t)) throw Error(ErrorCode::kParseError, "bad #total line " + std::to_string(lineno));
      total = t;
      continue;
    }
    if (line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kParseError, "frequency line " + std::to_string(lineno) + " has no tab");
    }
    std::uint64_t c = 0;
    const std::string num = line.substr(tab + 1);
    std::size_t used = 0;
    try {
      c = std::stoull(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != num.size()) {
      throw Error(ErrorCode::kParseError, "bad count on frequency line " + std::to_string(lineno));
    }
    counts[line.substr(0, tab)] += c;
  }
  FreqTable table(std::move(counts), total);
  if (table.total() == 0) throw Error(ErrorCode::kParseError, "frequency table total is zero");
  return table;
}

FreqTable FreqTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return parse(in);
}

std::uint64_t FreqTable::count(std::string_view word) const {
  const auto it = counts_.find(lowercase(word));
  return it == counts_.end() ? 0 : it->second;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Corpus parse_corpus(std::istream& in) {
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kParseError, "corpus line " + std::to_string(lineno) + " has no tab");
    }
    corpus.push_back({line.substr(0, tab), tokenize(std::string_view(line).substr(tab + 1))});
  }
  return corpus;
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  return parse_corpus(in);
}

std::optional<double> zipf_score(std::string_view word, const FreqTable& table) {
  const std::uint64_t c = table.count(word);
  if (c == 0) return std::nullopt;
  return std::log10(static_cast<double>(c) / static_cast<double>(table.total()) * 1e9);
}

Tag tag_word(std::string_view word, const FreqTable& table, double threshold) {
  const auto score = zipf_score(word, table);
  return (!score || *score < threshold) ? Tag::kTail : Tag::kCommon;
}

double rare_density(const Utterance& utt, const FreqTable& table, double threshold) {
  if (utt.words.empty()) throw Error(ErrorCode::kEmptyUtterance, "utterance '" + utt.id + "'");
  std::size_t tail = 0;
  for (const auto& w : utt.words)
    if (tag_word(w, table, threshold) == Tag::kTail) ++tail;
  return static_cast<double>(tail) / static_cast<double>(utt.words.size());
}

std::optional<PoolKind> parse_pool_kind(std::string_view name) {
  if (name == "r_top" || name == "r-top") return PoolKind::kTop;
  if (name == "r_mix" || name == "r-mix") return PoolKind::kMix;
  if (name == "r_cross" || name == "r-cross") return PoolKind::kCross;
  return std::nullopt;
}

std::string_view pool_kind_name(PoolKind kind) {
  switch (kind) {
    case PoolKind::kTop: return "r_top";
    case PoolKind::kMix: return "r_mix";
    case PoolKind::kCross: return "r_cross";
  }
  return "unknown";
}

std::size_t cross_stage_size(std::size_t n) { return (4 * n + 2) / 3; }

Pool build_pool(const std::vector<Corpus>& sources, PoolKind kind, std::size_t n,
                std::uint64_t seed, const FreqTable& table, double threshold) {
  if (kind == PoolKind::kCross ? sources.size() < 2 : sources.size() != 1) {
    throw Error(ErrorCode::kInsufficientCorpus,
                std::string(pool_kind_name(kind)) + " got " + std::to_string(sources.size()) +
                    " sources");
  }
  for (std::size_t s = 0; s < sources.size(); ++s) {
    if (sources[s].size() < n) {
      throw Error(ErrorCode::kInsufficientCorpus,
                  "source " + std::to_string(s) + " has " + std::to_string(sources[s].size()) +
                      " utterances, need " + std::to_string(n));
    }
  }

  Pool pool;
  switch (kind) {
    case PoolKind::kTop: {
      auto ranked = score_source(sources[0], 0, table, threshold);
      ranked.resize(n);
      pool.entries = std::move(ranked);
      break;
    }
    case PoolKind::kMix: {
      auto ranked = score_source(sources[0], 0, table, threshold);
      const std::size_t top = (n + 1) / 2;
      std::vector<PoolEntry> rest(ranked.begin() + static_cast<std::ptrdiff_t>(top), ranked.end());
      // Draw from the complement in corpus order so the sample depends only on the seed.
      std::sort(rest.begin(), rest.end(),
                [](const PoolEntry& a, const PoolEntry& b) { return a.index < b.index; });
      Rng rng(seed);
      rng.shuffle(rest);
      ranked.resize(top);
      pool.entries = std::move(ranked);
      pool.entries.insert(pool.entries.end(), rest.begin(),
                          rest.begin() + static_cast<std::ptrdiff_t>(n / 2));
      break;
    }
    case PoolKind::kCross: {
      const std::size_t stage = cross_stage_size(n);
      std::vector<PoolEntry> candidates;
      for (std::size_t s = 0; s < sources.size(); ++s) {
        auto ranked = score_source(sources[s], s, table, threshold);
        ranked.resize(std::min(stage, ranked.size()));
        candidates.insert(candidates.end(), ranked.begin(), ranked.end());
      }
      std::sort(candidates.begin(), candidates.end(), denser);
      candidates.resize(n);
      pool.entries = std::move(candidates);
      pool.staged_per_source = stage;
      break;
    }
  }
  return pool;
}

}  // namespace tarq
