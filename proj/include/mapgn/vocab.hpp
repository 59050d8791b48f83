#ifndef MAPGN_VOCAB_HPP
#define MAPGN_VOCAB_HPP

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mapgn/tensor.hpp"

namespace mapgn {

// Reserved ids. Raw text never encodes to anything but UNK from this set.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kMask = 4;
inline constexpr TokenId kNumSpecials = 5;

inline constexpr char32_t kReplacementChar = U'�';
inline constexpr std::string_view kMaskGlyph = "▁M";

namespace utf8 {
// Throws DataError on malformed input.
std::u32string decode(std::string_view s);
std::string encode(std::u32string_view s);
std::string encode(char32_t c);
}  // namespace utf8

// Character-level vocabulary: a bijection between Unicode scalar values and ids,
// with the five specials at ids 0-4.
class Vocab {
 public:
  Vocab();

  static Vocab build(const std::vector<std::string>& corpus, std::size_t min_count = 1,
                     std::optional<std::size_t> max_size = std::nullopt);
  static Vocab from_tokens(const std::vector<char32_t>& tokens);

  std::size_t size() const { return tokens_.size() + kNumSpecials; }

  TokenId id_of(char32_t c) const;
  bool contains(char32_t c) const { return index_.count(c) != 0; }
  // Token for a non-special id.
  char32_t token_of(TokenId id) const;
  bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }

  std::vector<TokenId> encode(std::string_view text) const;
  // UNK renders as U+FFFD, MASK as a visible glyph; PAD/BOS/EOS are skipped.
  std::string decode(const std::vector<TokenId>& ids) const;

  // Vocab file: five header lines for the specials, then one token per line;
  // line number (from 0) equals id. LF line endings.
  std::string serialize() const;
  static Vocab deserialize(std::string_view text);
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  // SHA-256 of serialize(), lowercase hex.
  std::string sha256() const;

  const std::vector<char32_t>& tokens() const { return tokens_; }

 private:
  std::vector<char32_t> tokens_;  // ids kNumSpecials...
  std::unordered_map<char32_t, TokenId> index_;
};

std::string sha256_hex(std::string_view bytes);

}  // namespace mapgn

#endif  // MAPGN_VOCAB_HPP
