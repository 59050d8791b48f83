#ifndef MAPGN_CORPUS_HPP
#define MAPGN_CORPUS_HPP

#include <cstddef>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mapgn/rng.hpp"

namespace mapgn {

inline constexpr std::size_t kDefaultMaxLineChars = 1000;

struct TextPair {
  std::string source;
  std::string target;
  bool operator==(const TextPair&) const = default;
};

// One sentence per line. Blank lines are skipped; CR before LF is dropped.
// Lines longer than `max_chars` characters raise DataError naming the line.
std::vector<std::string> load_unpaired(const std::string& path, std::size_t max_chars = kDefaultMaxLineChars);
std::vector<std::string> parse_unpaired(const std::string& text, std::size_t max_chars = kDefaultMaxLineChars,
                                        const std::string& origin = "<text>");
// source TAB target per line.
std::vector<TextPair> load_paired(const std::string& path, std::size_t max_chars = kDefaultMaxLineChars);
std::vector<TextPair> parse_paired(const std::string& text, std::size_t max_chars = kDefaultMaxLineChars,
                                   const std::string& origin = "<text>");

void write_unpaired(const std::string& path, const std::vector<std::string>& lines);
void write_paired(const std::string& path, const std::vector<TextPair>& pairs);

// Word lists for the sentence grammar:
//   subject aux verb object [adverb] [", because" subject aux verb object] ("." | "?")
struct SynthGrammar {
  std::vector<std::string> subjects;
  std::vector<std::string> auxiliaries;
  std::vector<std::string> verbs;
  std::vector<std::string> objects;
  std::vector<std::string> adverbs;
  double adverb_prob = 0.5;
  double clause_prob = 0.3;
  double question_prob = 0.3;
};

struct Substitution {
  std::string spoken;      // a single word
  std::string normalized;  // one or more words
};

// Spoken text is derived from a normalized sentence by replacing normalized
// fragments with their spoken forms (left to right, longest match first) and
// inserting fillers between words with probability `insertion_prob`.
struct SynthRuleSet {
  std::vector<Substitution> substitutions;
  std::vector<std::string> fillers;
  double insertion_prob = 0.15;
  double min_overlap = 0.70;  // pairs below this overlap are redrawn
  std::uint64_t seed = 1;
  SynthGrammar grammar;

  static SynthRuleSet defaults();
  // Rejects rule sets whose spoken side could not be mapped back uniquely.
  void validate() const;
  nlohmann::json to_json() const;
  static SynthRuleSet from_json(const nlohmann::json& j);
};

struct SynthSizes {
  std::size_t unpaired = 10000;
  std::size_t train = 500;
  std::size_t valid = 100;
  std::size_t test = 200;
};

struct SynthCorpus {
  std::vector<std::string> unpaired;  // normalized style only
  std::vector<TextPair> train;
  std::vector<TextPair> valid;
  std::vector<TextPair> test;
};

// Sentence-level tokens: words and the punctuation marks ",", ".", "?".
std::vector<std::string> split_words(const std::string& text);
std::string join_words(const std::vector<std::string>& words);

std::string generate_normalized(const SynthGrammar& g, Rng& rng);
std::string to_spoken(const SynthRuleSet& rules, const std::string& normalized, Rng& rng);
// Inverse of to_spoken: drops fillers and maps spoken words back.
std::string oracle_normalize(const SynthRuleSet& rules, const std::string& spoken);

// Every character the rules can emit, including space and punctuation.
std::set<char32_t> synth_alphabet(const SynthRuleSet& rules);

// 2 * LCS(s, t) / (|s| + |t|) over characters.
double verbatim_overlap(const std::string& s, const std::string& t);

// Distinct normalized sentences across all splits; no paired target appears in
// the unpaired set.
SynthCorpus synth_corpus(const SynthRuleSet& rules, const SynthSizes& sizes, Rng& rng);

}  // namespace mapgn

#endif  // MAPGN_CORPUS_HPP
