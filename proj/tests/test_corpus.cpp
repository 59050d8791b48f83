#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mapgn/corpus.hpp"
#include "mapgn/error.hpp"
#include "mapgn/metrics.hpp"
#include "mapgn/vocab.hpp"

using namespace mapgn;
namespace fs = std::filesystem;

namespace {

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

SynthRuleSet identity_rules() {
  auto r = SynthRuleSet::defaults();
  r.substitutions.clear();
  r.insertion_prob = 0.0;
  return r;
}

}  // namespace

TEST_CASE("unpaired loader examples") {
  CHECK(parse_unpaired("ab\ncd\n") == std::vector<std::string>{"ab", "cd"});
  CHECK(parse_unpaired("ab\r\n\n\ncd") == std::vector<std::string>{"ab", "cd"});
  CHECK(parse_unpaired("") .empty());
  const auto msg = message_of([] { parse_unpaired("ok\nabcdef\n", 5, "u.txt"); });
  CHECK(msg.find("u.txt:2") != std::string::npos);
  CHECK_THROWS_AS(parse_unpaired("a\n\xFF\n"), DataError);
  CHECK(parse_unpaired("日本語\n", 3).size() == 1);  // limit counts characters, not bytes
}

TEST_CASE("paired loader examples") {
  auto p = parse_paired("ab\tAB\n");
  REQUIRE(p.size() == 1);
  CHECK(p[0] == TextPair{"ab", "AB"});
  const auto msg = message_of([] { parse_paired("a\tb\nx\ty\tz\tw\n", 1000, "p.tsv"); });
  CHECK(msg.find("p.tsv:2") != std::string::npos);
  CHECK(msg.find("found 4") != std::string::npos);
  CHECK_THROWS_AS(parse_paired("no tab here\n"), DataError);
  CHECK_THROWS_AS(parse_paired("\tempty source\n"), DataError);
  CHECK(parse_paired("a\tb\n\nc\td\n").size() == 2);
}

TEST_CASE("file round trip") {
  const auto dir = fs::temp_directory_path() / "mapgn_corpus_test";
  fs::create_directories(dir);
  const std::vector<std::string> lines{"one", "two words"};
  const std::vector<TextPair> pairs{{"uh hi", "hi"}, {"gonna go", "going to go"}};
  write_unpaired((dir / "u.txt").string(), lines);
  write_paired((dir / "p.tsv").string(), pairs);
  CHECK(load_unpaired((dir / "u.txt").string()) == lines);
  CHECK(load_paired((dir / "p.tsv").string()) == pairs);
  CHECK_THROWS_AS(load_unpaired((dir / "missing.txt").string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("words split off punctuation and join back") {
  const std::string s = "ken will call mary, because tom is busy.";
  auto w = split_words(s);
  CHECK(w.back() == ".");
  CHECK(std::find(w.begin(), w.end(), ",") != w.end());
  CHECK(join_words(w) == s);
}

TEST_CASE("identity rules give identity pairs") {
  auto rules = identity_rules();
  CHECK_NOTHROW(rules.validate());
  Rng rng(3);
  for (int k = 0; k < 500; ++k) {
    const auto s = generate_normalized(rules.grammar, rng);
    CHECK(to_spoken(rules, s, rng) == s);
  }
  Rng r2(4);
  auto corpus = synth_corpus(rules, {50, 20, 5, 5}, r2);
  for (const auto& p : corpus.train) CHECK(p.source == p.target);
}

TEST_CASE("an empty rule table is an error") {
  auto rules = SynthRuleSet::defaults();
  rules.substitutions.clear();
  rules.fillers.clear();
  CHECK_THROWS_AS(rules.validate(), ConfigError);
  Rng rng(1);
  CHECK_THROWS_AS(synth_corpus(rules, {10, 5, 1, 1}, rng), ConfigError);
}

TEST_CASE("ambiguous rules are rejected") {
  auto bad_word = SynthRuleSet::defaults();
  bad_word.substitutions.push_back({"two words", "x"});
  CHECK_THROWS_AS(bad_word.validate(), ConfigError);
  auto filler_clash = SynthRuleSet::defaults();
  filler_clash.fillers.push_back("gonna");
  CHECK_THROWS_AS(filler_clash.validate(), ConfigError);
  auto lexicon = SynthRuleSet::defaults();
  lexicon.fillers.push_back(lexicon.grammar.verbs.front());
  CHECK_THROWS_AS(lexicon.validate(), ConfigError);
}

TEST_CASE("rule sets round trip through JSON") {
  auto r = SynthRuleSet::defaults();
  auto back = SynthRuleSet::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
}

TEST_CASE("fixed seed gives identical corpora") {
  auto rules = SynthRuleSet::defaults();
  Rng a(42), b(42), c(43);
  const SynthSizes sizes{300, 60, 10, 10};
  auto x = synth_corpus(rules, sizes, a), y = synth_corpus(rules, sizes, b), z = synth_corpus(rules, sizes, c);
  CHECK(x.unpaired == y.unpaired);
  CHECK(x.train == y.train);
  CHECK(x.valid == y.valid);
  CHECK(x.test == y.test);
  CHECK(x.train != z.train);
}

TEST_CASE("default rules: overlap, alphabet and oracle over 10,000 pairs") {
  auto rules = SynthRuleSet::defaults();
  Rng rng(7);
  auto corpus = synth_corpus(rules, {2000, 10000, 0, 0}, rng);
  REQUIRE(corpus.train.size() == 10000);
  const auto alphabet = synth_alphabet(rules);
  double min_overlap = 1.0, sum = 0.0;
  std::size_t changed = 0, outside = 0;
  std::vector<std::string> oracle, refs;
  for (const auto& p : corpus.train) {
    const double o = verbatim_overlap(p.source, p.target);
    min_overlap = std::min(min_overlap, o);
    sum += o;
    if (p.source != p.target) ++changed;
    for (const auto& s : {p.source, p.target}) {
      for (char32_t ch : utf8::decode(s)) outside += alphabet.count(ch) ? 0 : 1;
    }
    oracle.push_back(oracle_normalize(rules, p.source));
    refs.push_back(p.target);
  }
  for (const auto& s : corpus.unpaired) {
    for (char32_t ch : utf8::decode(s)) outside += alphabet.count(ch) ? 0 : 1;
  }
  MESSAGE("mean overlap " << sum / 10000 << ", min " << min_overlap << ", changed " << changed);
  CHECK(min_overlap >= 0.70);
  CHECK(sum / 10000 >= 0.70);
  CHECK(changed > 5000);  // the task is not trivial copying
  CHECK(outside == 0);
  CHECK(alphabet.size() <= 45);
  CHECK(oracle == refs);
  CHECK(evaluate_corpus(oracle, refs).bleu3 == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("splits are sentence-disjoint and unpaired text is normalized style") {
  auto rules = SynthRuleSet::defaults();
  Rng rng(8);
  auto c = synth_corpus(rules, {3000, 500, 100, 200}, rng);
  CHECK(c.unpaired.size() == 3000);
  CHECK(c.train.size() == 500);
  CHECK(c.valid.size() == 100);
  CHECK(c.test.size() == 200);
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto* split : {&c.train, &c.valid, &c.test}) {
    for (const auto& p : *split) {
      seen.insert(p.target);
      ++total;
    }
  }
  for (const auto& s : c.unpaired) {
    seen.insert(s);
    ++total;
  }
  CHECK(seen.size() == total);

  std::set<std::string> spoken_only;
  for (const auto& s : rules.fillers) spoken_only.insert(s);
  for (const auto& s : rules.substitutions) spoken_only.insert(s.spoken);
  std::size_t leaks = 0;
  for (const auto& s : c.unpaired) {
    for (const auto& w : split_words(s)) leaks += spoken_only.count(w);
  }
  CHECK(leaks == 0);
}

TEST_CASE("an over-large request is refused") {
  auto rules = SynthRuleSet::defaults();
  rules.grammar.subjects = {"ken"};
  rules.grammar.auxiliaries = {"will"};
  rules.grammar.verbs = {"call"};
  rules.grammar.objects = {"mary"};
  rules.grammar.adverbs = {"today"};
  Rng rng(9);
  CHECK_THROWS_AS(synth_corpus(rules, {1000, 10, 1, 1}, rng), ConfigError);
}
