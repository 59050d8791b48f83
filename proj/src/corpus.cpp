#include "mapgn/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "mapgn/error.hpp"
#include "mapgn/metrics.hpp"
#include "mapgn/vocab.hpp"

namespace mapgn {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Calls fn(line_no, line) for every non-blank line.
template <typename Fn>
void for_each_line(const std::string& text, std::size_t max_chars, const std::string& origin, Fn fn) {
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::u32string chars;
    try {
      chars = utf8::decode(line);
    } catch (const DataError& e) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (chars.size() > max_chars) {
      throw DataError(origin + ":" + std::to_string(line_no) + ": line has " + std::to_string(chars.size()) +
                      " characters, limit is " + std::to_string(max_chars));
    }
    fn(line_no, line);
  }
}

bool is_punct(const std::string& w) { return w == "," || w == "." || w == "?"; }

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(uniform_below(rng, v.size()))];
}

void append_words(std::vector<std::string>& out, const std::string& phrase) {
  for (auto& w : split_words(phrase)) out.push_back(std::move(w));
}

}  // namespace

std::vector<std::string> parse_unpaired(const std::string& text, std::size_t max_chars, const std::string& origin) {
  std::vector<std::string> out;
  for_each_line(text, max_chars, origin, [&](std::size_t, const std::string& line) { out.push_back(line); });
  return out;
}

std::vector<std::string> load_unpaired(const std::string& path, std::size_t max_chars) {
  return parse_unpaired(read_file(path), max_chars, path);
}

std::vector<TextPair> parse_paired(const std::string& text, std::size_t max_chars, const std::string& origin) {
  std::vector<TextPair> out;
  for_each_line(text, max_chars, origin, [&](std::size_t line_no, const std::string& line) {
    const auto tabs = static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t'));
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (tabs != 1) throw DataError(where + "expected 2 tab-separated fields, found " + std::to_string(tabs + 1));
    const auto tab = line.find('\t');
    TextPair p{line.substr(0, tab), line.substr(tab + 1)};
    if (p.source.empty() || p.target.empty()) throw DataError(where + "empty field");
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<TextPair> load_paired(const std::string& path, std::size_t max_chars) {
  return parse_paired(read_file(path), max_chars, path);
}

void write_unpaired(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& l : lines) out << l << '\n';
}

void write_paired(const std::string& path, const std::vector<TextPair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& p : pairs) out << p.source << '\t' << p.target << '\n';
}

// ---------------------------------------------------------------------------

SynthRuleSet SynthRuleSet::defaults() {
  SynthRuleSet r;
  r.substitutions = {
      {"gonna", "going to"}, {"wanna", "want to"}, {"gotta", "got to"},   {"hafta", "have to"},
      {"cuz", "because"},    {"em", "them"},       {"dont", "do not"},    {"lotta", "a lot of"},
      {"kinda", "kind of"},  {"lemme", "let me"},  {"gimme", "give me"},  {"im", "i am"},
      {"outta", "out of"},   {"sorta", "sort of"}, {"aint", "is not"},    {"ya", "you"},
  };
  r.fillers = {"uh", "um", "er", "hmm", "ah"};
  auto& g = r.grammar;
  g.subjects = {"i", "you", "we", "they", "he", "she", "my brother", "the doctor", "our teacher", "my friends",
                "the kids", "that man", "i am sure we", "she said you", "Ken", "Mary"};
  g.auxiliaries = {"want to", "am going to", "are going to", "have to", "do not want to", "can", "will",
                   "should", "got to", "would like to", "is not going to", "kind of want to", "let me",
                   "do not"};
  g.verbs = {"eat", "see", "call", "help", "visit", "find", "meet", "ask", "tell", "watch", "bring", "teach",
             "follow", "pay", "thank", "give me", "move", "paint", "cook", "wash"};
  g.objects = {"them", "a lot of people", "the book", "some water", "my parents", "the new car",
               "a kind of cake", "her", "this place", "that song", "the results", "a lot of them",
               "the house", "sort of everything", "his dog", "Tom", "Lucy", "Paris"};
  g.adverbs = {"today", "tomorrow", "right now", "later", "again", "every day", "soon", "out of town",
               "at night", "for them", "at 2", "at 3", "at 4", "by 5", "by 6", "at 7", "on day 8", "on day 9"};
  return r;
}

void SynthRuleSet::validate() const {
  std::vector<std::string> errs;
  if (substitutions.empty() && fillers.empty()) errs.push_back("rule table is empty (no substitutions, no fillers)");
  if (!(insertion_prob >= 0.0 && insertion_prob <= 1.0)) errs.push_back("insertion_prob must be in [0, 1]");
  if (!(min_overlap >= 0.0 && min_overlap <= 1.0)) errs.push_back("min_overlap must be in [0, 1]");
  auto check_list = [&](const char* name, const std::vector<std::string>& v) {
    if (v.empty()) errs.push_back(std::string("grammar.") + name + " is empty");
  };
  check_list("subjects", grammar.subjects);
  check_list("auxiliaries", grammar.auxiliaries);
  check_list("verbs", grammar.verbs);
  check_list("objects", grammar.objects);
  for (double p : {grammar.adverb_prob, grammar.clause_prob, grammar.question_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) errs.push_back("grammar probabilities must be in [0, 1]");
  }

  std::set<std::string> lexicon;
  for (const auto* list : {&grammar.subjects, &grammar.auxiliaries, &grammar.verbs, &grammar.objects, &grammar.adverbs}) {
    for (const auto& phrase : *list) {
      for (auto& w : split_words(phrase)) lexicon.insert(w);
    }
  }
  lexicon.insert("because");
  std::set<std::string> spoken_seen, normalized_seen;
  for (const auto& s : substitutions) {
    const auto sw = split_words(s.spoken);
    if (sw.size() != 1 || is_punct(sw[0])) errs.push_back("spoken form '" + s.spoken + "' must be one word");
    if (split_words(s.normalized).empty()) errs.push_back("substitution for '" + s.spoken + "' has an empty normalized side");
    if (lexicon.count(s.spoken)) errs.push_back("spoken form '" + s.spoken + "' is also a normalized word");
    if (!spoken_seen.insert(s.spoken).second) errs.push_back("duplicate spoken form '" + s.spoken + "'");
    if (!normalized_seen.insert(s.normalized).second) errs.push_back("duplicate normalized fragment '" + s.normalized + "'");
  }
  for (const auto& f : fillers) {
    const auto fw = split_words(f);
    if (fw.size() != 1 || is_punct(fw[0])) errs.push_back("filler '" + f + "' must be one word");
    if (lexicon.count(f)) errs.push_back("filler '" + f + "' is also a normalized word");
    if (spoken_seen.count(f)) errs.push_back("filler '" + f + "' is also a spoken form");
  }
  if (!errs.empty()) {
    std::string msg = "invalid synthesis rules:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
}

nlohmann::json SynthRuleSet::to_json() const {
  nlohmann::json subs = nlohmann::json::array();
  for (const auto& s : substitutions) subs.push_back({{"spoken", s.spoken}, {"normalized", s.normalized}});
  return {{"substitutions", subs},
          {"fillers", fillers},
          {"insertion_prob", insertion_prob},
          {"min_overlap", min_overlap},
          {"seed", seed},
          {"grammar",
           {{"subjects", grammar.subjects},
            {"auxiliaries", grammar.auxiliaries},
            {"verbs", grammar.verbs},
            {"objects", grammar.objects},
            {"adverbs", grammar.adverbs},
            {"adverb_prob", grammar.adverb_prob},
            {"clause_prob", grammar.clause_prob},
            {"question_prob", grammar.question_prob}}}};
}

SynthRuleSet SynthRuleSet::from_json(const nlohmann::json& j) {
  SynthRuleSet r;
  try {
    for (const auto& s : j.at("substitutions")) {
      r.substitutions.push_back({s.at("spoken").get<std::string>(), s.at("normalized").get<std::string>()});
    }
    r.fillers = j.at("fillers").get<std::vector<std::string>>();
    r.insertion_prob = j.at("insertion_prob").get<double>();
    r.min_overlap = j.value("min_overlap", r.min_overlap);
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto& g = j.at("grammar");
    r.grammar.subjects = g.at("subjects").get<std::vector<std::string>>();
    r.grammar.auxiliaries = g.at("auxiliaries").get<std::vector<std::string>>();
    r.grammar.verbs = g.at("verbs").get<std::vector<std::string>>();
    r.grammar.objects = g.at("objects").get<std::vector<std::string>>();
    r.grammar.adverbs = g.at("adverbs").get<std::vector<std::string>>();
    r.grammar.adverb_prob = g.at("adverb_prob").get<double>();
    r.grammar.clause_prob = g.at("clause_prob").get<double>();
    r.grammar.question_prob = g.at("question_prob").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("rules: ") + e.what());
  }
  r.validate();
  return r;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char c : text) {
    if (c == ' ' || c == '\t') {
      flush();
    } else if (c == ',' || c == '.' || c == '?') {
      flush();
      out.emplace_back(1, c);
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty() && !is_punct(w)) out.push_back(' ');
    out += w;
  }
  return out;
}

std::string generate_normalized(const SynthGrammar& g, Rng& rng) {
  std::vector<std::string> w;
  auto clause = [&] {
    append_words(w, pick(g.subjects, rng));
    append_words(w, pick(g.auxiliaries, rng));
    append_words(w, pick(g.verbs, rng));
    append_words(w, pick(g.objects, rng));
  };
  clause();
  if (!g.adverbs.empty() && uniform01(rng) < g.adverb_prob) append_words(w, pick(g.adverbs, rng));
  if (uniform01(rng) < g.clause_prob) {
    w.push_back(",");
    w.push_back("because");
    clause();
  }
  w.push_back(uniform01(rng) < g.question_prob ? "?" : ".");
  return join_words(w);
}

std::string to_spoken(const SynthRuleSet& rules, const std::string& normalized, Rng& rng) {
  const auto words = split_words(normalized);
  std::vector<std::vector<std::string>> patterns;
  for (const auto& s : rules.substitutions) patterns.push_back(split_words(s.normalized));
  std::vector<std::string> replaced;
  for (std::size_t i = 0; i < words.size();) {
    std::size_t best = rules.substitutions.size(), best_len = 0;
    for (std::size_t k = 0; k < patterns.size(); ++k) {
      const auto& p = patterns[k];
      if (p.size() <= best_len || i + p.size() > words.size()) continue;
      if (std::equal(p.begin(), p.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        best = k;
        best_len = p.size();
      }
    }
    if (best_len > 0) {
      replaced.push_back(rules.substitutions[best].spoken);
      i += best_len;
    } else {
      replaced.push_back(words[i++]);
    }
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < replaced.size(); ++i) {
    // Fillers go before words, never before punctuation.
    if (!rules.fillers.empty() && !is_punct(replaced[i]) && uniform01(rng) < rules.insertion_prob) {
      out.push_back(pick(rules.fillers, rng));
    }
    out.push_back(replaced[i]);
  }
  return join_words(out);
}

std::string oracle_normalize(const SynthRuleSet& rules, const std::string& spoken) {
  std::unordered_set<std::string> fillers(rules.fillers.begin(), rules.fillers.end());
  std::vector<std::string> out;
  for (const auto& w : split_words(spoken)) {
    if (fillers.count(w)) continue;
    auto it = std::find_if(rules.substitutions.begin(), rules.substitutions.end(),
                           [&](const Substitution& s) { return s.spoken == w; });
    if (it != rules.substitutions.end()) {
      append_words(out, it->normalized);
    } else {
      out.push_back(w);
    }
  }
  return join_words(out);
}

std::set<char32_t> synth_alphabet(const SynthRuleSet& rules) {
  std::set<char32_t> out{U' ', U',', U'.', U'?'};
  auto add = [&](const std::string& s) {
    for (char32_t c : utf8::decode(s)) out.insert(c);
  };
  const auto& g = rules.grammar;
  for (const auto* list : {&g.subjects, &g.auxiliaries, &g.verbs, &g.objects, &g.adverbs, &rules.fillers}) {
    for (const auto& s : *list) add(s);
  }
  for (const auto& s : rules.substitutions) {
    add(s.spoken);
    add(s.normalized);
  }
  add("because");
  return out;
}

double verbatim_overlap(const std::string& s, const std::string& t) {
  const auto a = utf8::decode(s), b = utf8::decode(t);
  if (a.empty() && b.empty()) return 1.0;
  return 2.0 * static_cast<double>(lcs_length(a, b)) / static_cast<double>(a.size() + b.size());
}

SynthCorpus synth_corpus(const SynthRuleSet& rules, const SynthSizes& sizes, Rng& rng) {
  rules.validate();
  const std::size_t n_paired = sizes.train + sizes.valid + sizes.test;
  if (n_paired + sizes.unpaired == 0) throw ConfigError("synth: nothing to generate");
  std::unordered_set<std::string> seen;
  const std::size_t max_attempts = 100 * (n_paired + sizes.unpaired) + 1000;
  std::size_t attempts = 0;

  auto fresh_sentence = [&]() {
    while (true) {
      if (++attempts > max_attempts) {
        throw ConfigError("synth: grammar cannot produce enough distinct sentences (" + std::to_string(seen.size()) +
                          " after " + std::to_string(max_attempts) + " draws)");
      }
      auto s = generate_normalized(rules.grammar, rng);
      if (seen.insert(s).second) return s;
    }
  };

  std::vector<TextPair> paired;
  while (paired.size() < n_paired) {
    auto target = fresh_sentence();
    auto source = to_spoken(rules, target, rng);
    // Redraw the fillers a few times before giving up on this sentence.
    for (int k = 0; k < 8 && verbatim_overlap(source, target) < rules.min_overlap; ++k) {
      source = to_spoken(rules, target, rng);
    }
    if (verbatim_overlap(source, target) < rules.min_overlap) continue;
    paired.push_back({std::move(source), std::move(target)});
  }
  SynthCorpus c;
  c.train.assign(paired.begin(), paired.begin() + static_cast<std::ptrdiff_t>(sizes.train));
  c.valid.assign(paired.begin() + static_cast<std::ptrdiff_t>(sizes.train),
                 paired.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.valid));
  c.test.assign(paired.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.valid), paired.end());
  c.unpaired.reserve(sizes.unpaired);
  while (c.unpaired.size() < sizes.unpaired) c.unpaired.push_back(fresh_sentence());
  return c;
}

}  // namespace mapgn
