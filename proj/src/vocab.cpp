#include "mapgn/vocab.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

namespace mapgn {

namespace {

constexpr std::array<std::string_view, 5> kSpecialNames = {"<pad>", "<s>", "</s>", "<unk>", "<mask>"};

}  // namespace

namespace utf8 {

std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len;
    char32_t cp;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + static_cast<std::size_t>(len) > s.size()) {
      throw DataError("truncated UTF-8 sequence at offset " + std::to_string(i));
    }
    for (int k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((b & 0xC0) != 0x80) throw DataError("invalid UTF-8 continuation at offset " + std::to_string(i));
      cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw DataError("invalid UTF-8 scalar at offset " + std::to_string(i));
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

std::string encode(char32_t c) {
  std::string out;
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
  }
  return out;
}

std::string encode(std::u32string_view s) {
  std::string out;
  for (char32_t c : s) out += encode(c);
  return out;
}

}  // namespace utf8

Vocab::Vocab() = default;

Vocab Vocab::from_tokens(const std::vector<char32_t>& tokens) {
  Vocab v;
  for (char32_t c : tokens) {
    if (v.index_.count(c)) throw DataError("duplicate vocabulary token U+" + std::to_string(c));
    v.index_.emplace(c, static_cast<TokenId>(v.tokens_.size()) + kNumSpecials);
    v.tokens_.push_back(c);
  }
  return v;
}

Vocab Vocab::build(const std::vector<std::string>& corpus, std::size_t min_count,
                   std::optional<std::size_t> max_size) {
  if (corpus.empty()) throw DataError("build_vocab: empty corpus");
  if (min_count < 1) throw ConfigError("build_vocab: min_count must be >= 1");
  std::map<char32_t, std::size_t> freq;
  for (const auto& line : corpus) {
    for (char32_t c : utf8::decode(line)) ++freq[c];
  }
  std::vector<std::pair<char32_t, std::size_t>> items;
  for (const auto& [c, n] : freq) {
    if (n >= min_count) items.emplace_back(c, n);
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<char32_t> toks;
  for (const auto& [c, n] : items) {
    if (max_size && toks.size() + kNumSpecials >= *max_size) break;
    toks.push_back(c);
  }
  return from_tokens(toks);
}

TokenId Vocab::id_of(char32_t c) const {
  auto it = index_.find(c);
  return it == index_.end() ? kUnk : it->second;
}

char32_t Vocab::token_of(TokenId id) const {
  if (id < kNumSpecials || static_cast<std::size_t>(id) >= size()) {
    throw DataError("token_of: id " + std::to_string(id) + " is special or out of range");
  }
  return tokens_[static_cast<std::size_t>(id - kNumSpecials)];
}

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (char32_t c : utf8::decode(text)) ids.push_back(id_of(c));
  return ids;
}

std::string Vocab::decode(const std::vector<TokenId>& ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
      throw DataError("decode: id " + std::to_string(id) + " out of range for vocab of size " +
                      std::to_string(size()));
    }
    switch (id) {
      case kPad:
      case kBos:
      case kEos:
        break;
      case kUnk:
        out += utf8::encode(kReplacementChar);
        break;
      case kMask:
        out += kMaskGlyph;
        break;
      default:
        out += utf8::encode(tokens_[static_cast<std::size_t>(id - kNumSpecials)]);
    }
  }
  return out;
}

std::string Vocab::serialize() const {
  std::string out;
  for (auto name : kSpecialNames) {
    out += name;
    out += '\n';
  }
  for (char32_t c : tokens_) {
    out += utf8::encode(c);
    out += '\n';
  }
  return out;
}

Vocab Vocab::deserialize(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) throw DataError("vocab file: missing trailing LF");
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.size() < kSpecialNames.size()) throw DataError("vocab file: missing specials header");
  for (std::size_t i = 0; i < kSpecialNames.size(); ++i) {
    if (lines[i] != kSpecialNames[i]) {
      throw DataError("vocab file: line " + std::to_string(i + 1) + " must be " + std::string(kSpecialNames[i]));
    }
  }
  std::vector<char32_t> toks;
  for (std::size_t i = kSpecialNames.size(); i < lines.size(); ++i) {
    const auto cps = utf8::decode(lines[i]);
    if (cps.size() != 1) throw DataError("vocab file: line " + std::to_string(i + 1) + " is not one character");
    toks.push_back(cps[0]);
  }
  return from_tokens(toks);
}

void Vocab::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write vocab file " + path);
  f << serialize();
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read vocab file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str());
}

std::string Vocab::sha256() const { return sha256_hex(serialize()); }

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ExitCode::kInternal, "crypto", "SHA-256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace mapgn
