#include <random>

#include "doctest.h"
#include "mapgn/error.hpp"
#include "mapgn/vocab.hpp"

using namespace mapgn;

TEST_CASE("specials occupy ids 0-4 in fixed order") {
  CHECK(kPad == 0);
  CHECK(kBos == 1);
  CHECK(kEos == 2);
  CHECK(kUnk == 3);
  CHECK(kMask == 4);
  Vocab v = Vocab::build({"x"});
  const std::string text = v.serialize();
  CHECK(text.rfind("<pad>\n<s>\n</s>\n<unk>\n<mask>\nx\n", 0) == 0);
}

TEST_CASE("min_count filters characters") {
  Vocab v1 = Vocab::build({"aab"}, 1);
  CHECK(v1.size() == 7);
  CHECK(v1.contains(U'a'));
  CHECK(v1.contains(U'b'));
  Vocab v2 = Vocab::build({"aab"}, 2);
  CHECK(v2.size() == 6);
  CHECK(v2.contains(U'a'));
  CHECK_FALSE(v2.contains(U'b'));
}

TEST_CASE("ordering: descending frequency, ties by code point") {
  // a and b both occur 3 times in {"abab", "ba"}.
  Vocab v = Vocab::build({"abab", "ba"});
  CHECK(v.id_of(U'a') == 5);
  CHECK(v.id_of(U'b') == 6);
  Vocab w = Vocab::build({"zzzy", "yx"});  // z:3, y:2, x:1
  CHECK(w.id_of(U'z') == 5);
  CHECK(w.id_of(U'y') == 6);
  CHECK(w.id_of(U'x') == 7);
  Vocab cap = Vocab::build({"zzzy", "yx"}, 1, 7);
  CHECK(cap.size() == 7);
  CHECK_FALSE(cap.contains(U'x'));
}

TEST_CASE("empty corpus is an error") { CHECK_THROWS_AS(Vocab::build({}), DataError); }

TEST_CASE("encode maps unknown characters to UNK") {
  Vocab v = Vocab::build({"ab"});
  CHECK(v.encode("ab") == std::vector<TokenId>{v.id_of(U'a'), v.id_of(U'b')});
  CHECK(v.encode("a☃") == std::vector<TokenId>{v.id_of(U'a'), kUnk});
}

TEST_CASE("decode skips PAD/BOS/EOS, renders UNK and MASK, rejects out of range") {
  Vocab v = Vocab::build({"ab"});
  const TokenId a = v.id_of(U'a');
  CHECK(v.decode({kBos, a, kPad, kEos}) == "a");
  CHECK(v.decode({a, kUnk}) == "a\xEF\xBF\xBD");
  CHECK(v.decode({kMask, a}) == std::string(kMaskGlyph) + "a");
  CHECK_THROWS_AS(v.decode({static_cast<TokenId>(v.size())}), DataError);
  CHECK_THROWS_AS(v.decode({-1}), DataError);
}

TEST_CASE("round trip on random in-vocabulary strings; encode never emits specials") {
  Vocab v = Vocab::build({"abcdeé日本語 ,.?"});
  std::mt19937_64 g(7);
  const auto& toks = v.tokens();
  for (int k = 0; k < 500; ++k) {
    std::u32string s;
    const auto len = g() % 20;
    for (std::size_t i = 0; i < len; ++i) s.push_back(toks[g() % toks.size()]);
    const std::string text = utf8::encode(s);
    auto ids = v.encode(text);
    for (TokenId id : ids) CHECK(id >= kNumSpecials);
    CHECK(v.decode(ids) == text);
    for (TokenId id : ids) CHECK(v.id_of(v.token_of(id)) == id);
  }
}

TEST_CASE("UTF-8 validation") {
  CHECK(utf8::decode("a\xC3\xA9") == U"aé");
  CHECK_THROWS_AS(utf8::decode("\xC3"), DataError);
  CHECK_THROWS_AS(utf8::decode("\xFF"), DataError);
  CHECK_THROWS_AS(utf8::decode("\xED\xA0\x80"), DataError);  // surrogate
}

TEST_CASE("vocab file round trip and header validation") {
  Vocab v = Vocab::build({"hello world", "日本"});
  const std::string text = v.serialize();
  CHECK(text.find('\r') == std::string::npos);
  Vocab w = Vocab::deserialize(text);
  CHECK(w.tokens() == v.tokens());
  CHECK(w.sha256() == v.sha256());
  CHECK_THROWS_AS(Vocab::deserialize("<pad>\n<s>\n"), DataError);
  CHECK_THROWS_AS(Vocab::deserialize("<pad>\n<s>\n</s>\n<unk>\n<mask>\nab\n"), DataError);
  CHECK_THROWS_AS(Vocab::deserialize("<pad>\n<s>\n</s>\n<unk>\n<mask>\na\na\n"), DataError);
}

TEST_CASE("sha256 matches a published test vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
