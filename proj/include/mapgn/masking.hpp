#ifndef MAPGN_MASKING_HPP
#define MAPGN_MASKING_HPP

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mapgn/rng.hpp"
#include "mapgn/vocab.hpp"

namespace mapgn {

enum class RandomSource { kAllVocab, kMaskingSpan };

// One row of the masking table: how each token inside the selected span is
// corrupted, and where random replacements are drawn from.
struct MaskingSpec {
  std::string name;
  double p_mask = 0.0;
  double p_random = 0.0;
  double p_unchanged = 1.0;
  RandomSource random_source = RandomSource::kAllVocab;
  double span_ratio = 0.5;

  // Throws ConfigError unless the probabilities are valid and sum to 1 (1e-12).
  void validate() const;

  static MaskingSpec mass1();
  static MaskingSpec mass2();
  static MaskingSpec mass3();
  static MaskingSpec mapgn();
  // Looks up "mass1" | "mass2" | "mass3" | "mapgn".
  static MaskingSpec preset(const std::string& name);
  static std::vector<std::string> preset_names();
};

// 1-based inclusive span [a, b].
struct Span {
  std::size_t a = 1;
  std::size_t b = 1;
  std::size_t length() const { return b - a + 1; }
  bool operator==(const Span&) const = default;
};

enum class MaskAction { kMask = 0, kRandom = 1, kUnchanged = 2 };

struct MaskedExample {
  std::vector<TokenId> encoder_input;
  std::vector<TokenId> decoder_input;
  std::vector<TokenId> targets;
  Span span;
};

// Span length for a sentence of n tokens: max(1, floor(ratio * n + 0.5)).
std::size_t span_length(std::size_t n, double span_ratio);

template <class URBG>
Span sample_span(std::size_t n, double span_ratio, URBG& gen) {
  if (n == 0) throw DataError("sample_span: empty sentence");
  const std::size_t k = span_length(n, span_ratio);
  const std::size_t a = 1 + static_cast<std::size_t>(uniform_below(gen, n - k + 1));
  return {a, a + k - 1};
}

void check_span(std::size_t n, const Span& span);
void check_no_specials(const std::vector<TokenId>& tokens);

template <class URBG>
MaskAction draw_action(const MaskingSpec& spec, URBG& gen) {
  const double u = uniform01(gen);
  if (u < spec.p_mask) return MaskAction::kMask;
  if (u < spec.p_mask + spec.p_random) return MaskAction::kRandom;
  return MaskAction::kUnchanged;
}

// Per-position actions taken by the last corruption, for auditing.
struct CorruptionTrace {
  std::vector<MaskAction> actions;
  std::vector<TokenId> random_values;
};

// Corrupts tokens inside `span`; everything outside is copied through.
template <class URBG>
std::vector<TokenId> corrupt_span(const std::vector<TokenId>& tokens, const Span& span,
                                  const MaskingSpec& spec, std::size_t vocab_size, URBG& gen,
                                  CorruptionTrace* trace = nullptr) {
  check_span(tokens.size(), span);
  check_no_specials(tokens);
  if (spec.random_source == RandomSource::kAllVocab && spec.p_random > 0 &&
      vocab_size <= static_cast<std::size_t>(kNumSpecials)) {
    throw ConfigError("corrupt_span: vocabulary has no ordinary tokens to draw from");
  }
  std::vector<TokenId> out = tokens;
  const std::vector<TokenId> original(tokens.begin() + static_cast<std::ptrdiff_t>(span.a - 1),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(span.b));
  for (std::size_t i = span.a - 1; i < span.b; ++i) {
    const MaskAction act = draw_action(spec, gen);
    if (trace) trace->actions.push_back(act);
    switch (act) {
      case MaskAction::kMask:
        out[i] = kMask;
        break;
      case MaskAction::kRandom: {
        TokenId r;
        if (spec.random_source == RandomSource::kMaskingSpan) {
          r = original[uniform_below(gen, original.size())];
        } else {
          r = kNumSpecials + static_cast<TokenId>(uniform_below(gen, vocab_size - kNumSpecials));
        }
        out[i] = r;
        if (trace) trace->random_values.push_back(r);
        break;
      }
      case MaskAction::kUnchanged:
        break;
    }
  }
  return out;
}

// Builds the encoder/decoder views of a span around an already corrupted input.
MaskedExample assemble_example(const std::vector<TokenId>& sentence, std::vector<TokenId> encoder_input,
                               const Span& span);

template <class URBG>
MaskedExample build_pretrain_example(const std::vector<TokenId>& sentence, const MaskingSpec& spec,
                                     std::size_t vocab_size, URBG& gen, CorruptionTrace* trace = nullptr) {
  if (sentence.empty()) throw DataError("build_pretrain_example: empty sentence");
  check_no_specials(sentence);
  const Span span = sample_span(sentence.size(), spec.span_ratio, gen);
  auto enc = corrupt_span(sentence, span, spec, vocab_size, gen, trace);
  return assemble_example(sentence, std::move(enc), span);
}

struct MaskingReport {
  std::size_t positions = 0;
  std::size_t mask_count = 0;
  std::size_t random_count = 0;
  std::size_t unchanged_count = 0;
  std::size_t random_in_span = 0;   // random values found in the original span multiset
  std::size_t random_special = 0;   // random values that are special ids
  std::map<std::size_t, std::size_t> span_lengths;

  double fraction(MaskAction a) const;
  // Share of random replacements that were members of their span; 1 when none.
  double containment_rate() const;
};

// Corrupts `samples` sentences drawn round-robin from the corpus.
MaskingReport masking_report(const std::vector<std::vector<TokenId>>& corpus, const MaskingSpec& spec,
                             std::size_t vocab_size, Rng& rng, std::size_t samples);

}  // namespace mapgn

#endif  // MAPGN_MASKING_HPP
