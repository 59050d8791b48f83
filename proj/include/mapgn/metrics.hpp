#ifndef MAPGN_METRICS_HPP
#define MAPGN_METRICS_HPP

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace mapgn {

// All metrics work on Unicode scalar values (characters).
using CharSeq = std::u32string;

struct BleuCounts {
  std::array<std::size_t, 3> matches{};  // clipped n-gram matches, n = 1..3
  std::array<std::size_t, 3> totals{};   // candidate n-gram counts
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

BleuCounts bleu_counts(const CharSeq& hyp, const CharSeq& ref);
// Geometric mean of 1..3-gram precisions times the brevity penalty. Zero-match
// levels are floored at 1 / (2 * candidate n-gram count).
double bleu3_from_counts(const BleuCounts& c);
double bleu3(const std::vector<CharSeq>& hyps, const std::vector<CharSeq>& refs, BleuCounts* totals = nullptr);

std::size_t lcs_length(const CharSeq& a, const CharSeq& b);
double rouge_l_sentence(const CharSeq& hyp, const CharSeq& ref);
double rouge_l(const std::vector<CharSeq>& hyps, const std::vector<CharSeq>& refs);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  bool exact = true;  // false if the search budget ran out before proving optimality
};

// Maximum-cardinality exact-match alignment with the fewest chunks.
MeteorAlignment meteor_align(const CharSeq& hyp, const CharSeq& ref, std::size_t node_budget = 2'000'000);

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

double meteor_sentence(const CharSeq& hyp, const CharSeq& ref, const MeteorParams& p = {},
                       MeteorAlignment* alignment = nullptr);
double meteor(const std::vector<CharSeq>& hyps, const std::vector<CharSeq>& refs, const MeteorParams& p = {});

struct SentenceScores {
  double bleu3 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
  std::size_t lcs = 0;
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

struct MetricReport {
  double bleu3 = 0.0;
  double rouge_l = 0.0;
  double meteor = 0.0;
  BleuCounts bleu_totals;
  std::vector<SentenceScores> sentences;

  nlohmann::json to_json(bool per_sentence = false) const;
  std::string per_sentence_csv() const;
};

// Hypotheses and references as UTF-8 lines.
MetricReport evaluate_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

}  // namespace mapgn

#endif  // MAPGN_METRICS_HPP
