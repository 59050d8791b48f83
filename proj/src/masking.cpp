#include "mapgn/masking.hpp"

#include <algorithm>

namespace mapgn {

void MaskingSpec::validate() const {
  std::vector<std::string> problems;
  for (double p : {p_mask, p_random, p_unchanged}) {
    if (!(p >= 0.0 && p <= 1.0)) problems.push_back("probabilities must lie in [0, 1]");
  }
  if (std::abs(p_mask + p_random + p_unchanged - 1.0) > 1e-12) {
    problems.push_back("p_mask + p_random + p_unchanged must equal 1");
  }
  if (!(span_ratio > 0.0 && span_ratio <= 1.0)) problems.push_back("span_ratio must lie in (0, 1]");
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + ("masking '" + name + "': " + p);
    throw ConfigError(msg);
  }
}

MaskingSpec MaskingSpec::mass1() { return {"mass1", 0.8, 0.1, 0.1, RandomSource::kAllVocab, 0.5}; }
MaskingSpec MaskingSpec::mass2() { return {"mass2", 0.4, 0.4, 0.2, RandomSource::kAllVocab, 0.5}; }
MaskingSpec MaskingSpec::mass3() { return {"mass3", 0.4, 0.0, 0.6, RandomSource::kAllVocab, 0.5}; }
MaskingSpec MaskingSpec::mapgn() { return {"mapgn", 0.4, 0.4, 0.2, RandomSource::kMaskingSpan, 0.5}; }

MaskingSpec MaskingSpec::preset(const std::string& name) {
  if (name == "mass1") return mass1();
  if (name == "mass2") return mass2();
  if (name == "mass3") return mass3();
  if (name == "mapgn") return mapgn();
  throw ConfigError("unknown masking preset '" + name + "' (expected mass1|mass2|mass3|mapgn)");
}

std::vector<std::string> MaskingSpec::preset_names() { return {"mass1", "mass2", "mass3", "mapgn"}; }

std::size_t span_length(std::size_t n, double span_ratio) {
  const auto k = static_cast<std::size_t>(std::floor(span_ratio * static_cast<double>(n) + 0.5));
  return std::clamp<std::size_t>(k, 1, n);
}

void check_span(std::size_t n, const Span& span) {
  if (span.a < 1 || span.a > span.b || span.b > n) {
    throw DataError("span (" + std::to_string(span.a) + ", " + std::to_string(span.b) +
                    ") out of range for length " + std::to_string(n));
  }
}

void check_no_specials(const std::vector<TokenId>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < kNumSpecials) {
      throw DataError("special token id " + std::to_string(tokens[i]) + " at position " +
                      std::to_string(i + 1) + " of a sentence offered to masking");
    }
  }
}

MaskedExample assemble_example(const std::vector<TokenId>& sentence, std::vector<TokenId> encoder_input,
                               const Span& span) {
  check_span(sentence.size(), span);
  MaskedExample ex;
  ex.encoder_input = std::move(encoder_input);
  ex.span = span;
  ex.decoder_input.push_back(span.a == 1 ? kBos : sentence[span.a - 2]);
  for (std::size_t i = span.a - 1; i < span.b; ++i) {
    ex.targets.push_back(sentence[i]);
    if (i + 1 < span.b) ex.decoder_input.push_back(sentence[i]);
  }
  return ex;
}

double MaskingReport::fraction(MaskAction a) const {
  if (positions == 0) return 0.0;
  const std::size_t n = a == MaskAction::kMask ? mask_count : a == MaskAction::kRandom ? random_count : unchanged_count;
  return static_cast<double>(n) / static_cast<double>(positions);
}

double MaskingReport::containment_rate() const {
  return random_count == 0 ? 1.0 : static_cast<double>(random_in_span) / static_cast<double>(random_count);
}

MaskingReport masking_report(const std::vector<std::vector<TokenId>>& corpus, const MaskingSpec& spec,
                             std::size_t vocab_size, Rng& rng, std::size_t samples) {
  if (corpus.empty()) throw DataError("masking_report: empty corpus");
  if (samples < 1) throw ConfigError("masking_report: samples must be >= 1");
  spec.validate();
  MaskingReport rep;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto& sentence = corpus[s % corpus.size()];
    CorruptionTrace trace;
    const auto ex = build_pretrain_example(sentence, spec, vocab_size, rng, &trace);
    const std::vector<TokenId> span_tokens(ex.targets);
    rep.span_lengths[ex.span.length()]++;
    for (auto a : trace.actions) {
      ++rep.positions;
      if (a == MaskAction::kMask) ++rep.mask_count;
      if (a == MaskAction::kRandom) ++rep.random_count;
      if (a == MaskAction::kUnchanged) ++rep.unchanged_count;
    }
    for (TokenId r : trace.random_values) {
      if (std::find(span_tokens.begin(), span_tokens.end(), r) != span_tokens.end()) ++rep.random_in_span;
      if (r < kNumSpecials) ++rep.random_special;
    }
  }
  return rep;
}

}  // namespace mapgn
