#include "mapgn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "mapgn/error.hpp"
#include "mapgn/vocab.hpp"

namespace mapgn {

namespace {

void check_corpus(std::size_t nh, std::size_t nr) {
  if (nh == 0 || nr == 0) throw DataError("metric: empty corpus");
  if (nh != nr) throw DataError("metric: " + std::to_string(nh) + " hypotheses vs " + std::to_string(nr) + " references");
}

std::map<CharSeq, std::size_t> ngrams(const CharSeq& s, std::size_t n) {
  std::map<CharSeq, std::size_t> out;
  if (s.size() < n) return out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++out[s.substr(i, n)];
  return out;
}

}  // namespace

BleuCounts bleu_counts(const CharSeq& hyp, const CharSeq& ref) {
  BleuCounts c;
  c.hyp_length = hyp.size();
  c.ref_length = ref.size();
  for (std::size_t n = 1; n <= 3; ++n) {
    const auto h = ngrams(hyp, n);
    const auto r = ngrams(ref, n);
    for (const auto& [g, cnt] : h) {
      c.totals[n - 1] += cnt;
      auto it = r.find(g);
      if (it != r.end()) c.matches[n - 1] += std::min(cnt, it->second);
    }
  }
  return c;
}

double bleu3_from_counts(const BleuCounts& c) {
  if (c.hyp_length == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 3; ++n) {
    const double total = static_cast<double>(std::max<std::size_t>(c.totals[n], 1));
    const double p = c.matches[n] > 0 ? static_cast<double>(c.matches[n]) / total : 1.0 / (2.0 * total);
    log_sum += std::log(p);
  }
  const double bp = c.hyp_length < c.ref_length
                        ? std::exp(1.0 - static_cast<double>(c.ref_length) / static_cast<double>(c.hyp_length))
                        : 1.0;
  return bp * std::exp(log_sum / 3.0);
}

double bleu3(const std::vector<CharSeq>& hyps, const std::vector<CharSeq>& refs, BleuCounts* totals) {
  check_corpus(hyps.size(), refs.size());
  BleuCounts sum;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const auto c = bleu_counts(hyps[i], refs[i]);
    for (std::size_t n = 0; n < 3; ++n) {
      sum.matches[n] += c.matches[n];
      sum.totals[n] += c.totals[n];
    }
    sum.hyp_length += c.hyp_length;
    sum.ref_length += c.ref_length;
  }
  if (totals) *totals = sum;
  return bleu3_from_counts(sum);
}

std::size_t lcs_length(const CharSeq& a, const CharSeq& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l_sentence(const CharSeq& hyp, const CharSeq& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(hyp, ref));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(hyp.size());
  const double r = l / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l(const std::vector<CharSeq>& hyps, const std::vector<CharSeq>& refs) {
  check_corpus(hyps.size(), refs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += rouge_l_sentence(hyps[i], refs[i]);
  return sum / static_cast<double>(hyps.size());
}

// ---------------------------------------------------------------------------
// METEOR alignment: maximize links (hyp i -> ref j followed by i+1 -> j+1)
// among maximum-cardinality alignments; chunks = matches - links.

namespace {

class ChunkSearch {
 public:
  ChunkSearch(const CharSeq& h, const CharSeq& r, std::size_t budget) : h_(h), r_(r), budget_(budget) {
    std::map<char32_t, std::size_t> ch, cr;
    for (char32_t c : h) ++ch[c];
    for (char32_t c : r) ++cr[c];
    for (const auto& [c, n] : ch) {
      const std::size_t m = std::min(n, cr[c]);
      matches_ += m;
      skips_[c] = n - m;
    }
    for (std::size_t j = 0; j < r.size(); ++j) positions_[r[j]].push_back(j);
    // Static bound on links available from hyp position i onwards.
    std::map<CharSeq, std::size_t> ref_bigrams;
    for (std::size_t j = 0; j + 1 < r.size(); ++j) ++ref_bigrams[r.substr(j, 2)];
    link_bound_.assign(h.size() + 1, 0);
    std::map<CharSeq, std::size_t> seen;
    for (std::size_t i = h.size(); i-- > 0;) {
      std::size_t add = 0;
      if (i + 1 < h.size()) {
        const CharSeq bg = h.substr(i, 2);
        auto it = ref_bigrams.find(bg);
        if (it != ref_bigrams.end() && seen[bg] < it->second) {
          ++seen[bg];
          add = 1;
        }
      }
      link_bound_[i] = link_bound_[i + 1] + add;
    }
    used_.assign(r.size(), false);
    assign_.assign(h.size(), kNone);
  }

  MeteorAlignment run() {
    MeteorAlignment out;
    out.matches = matches_;
    if (matches_ == 0) return out;
    best_links_ = greedy_links();
    search(0, 0);
    out.chunks = matches_ - best_links_;
    out.exact = nodes_ <= budget_;
    return out;
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  // Repeatedly aligns the longest common substring over unused positions, then
  // pairs leftovers arbitrarily. Gives a valid starting bound.
  std::size_t greedy_links() {
    std::vector<bool> hu(h_.size(), false), ru(r_.size(), false);
    std::size_t links = 0;
    while (true) {
      std::size_t best = 0, bi = 0, bj = 0;
      for (std::size_t i = 0; i < h_.size(); ++i) {
        for (std::size_t j = 0; j < r_.size(); ++j) {
          std::size_t k = 0;
          while (i + k < h_.size() && j + k < r_.size() && !hu[i + k] && !ru[j + k] && h_[i + k] == r_[j + k]) ++k;
          if (k > best) {
            best = k;
            bi = i;
            bj = j;
          }
        }
      }
      if (best == 0) break;
      for (std::size_t k = 0; k < best; ++k) {
        hu[bi + k] = true;
        ru[bj + k] = true;
      }
      links += best - 1;
    }
    return links;
  }

  void search(std::size_t i, std::size_t links) {
    if (++nodes_ > budget_) return;
    if (i == h_.size()) {
      if (matched_ == matches_ && links > best_links_) best_links_ = links;
      return;
    }
    // Links still reachable: one from (i-1, i) plus those starting at i.
    const std::size_t prev_link = (i > 0 && assign_[i - 1] != kNone) ? 1 : 0;
    if (links + prev_link + link_bound_[i] <= best_links_) return;

    const char32_t c = h_[i];
    const std::size_t prev_j = i > 0 ? assign_[i - 1] : kNone;
    auto try_match = [&](std::size_t j) {
      used_[j] = true;
      assign_[i] = j;
      ++matched_;
      search(i + 1, links + ((prev_j != kNone && j == prev_j + 1) ? 1 : 0));
      --matched_;
      assign_[i] = kNone;
      used_[j] = false;
    };
    auto pos = positions_.find(c);
    if (pos != positions_.end()) {
      if (prev_j != kNone && prev_j + 1 < r_.size() && r_[prev_j + 1] == c && !used_[prev_j + 1]) {
        try_match(prev_j + 1);
      }
      for (std::size_t j : pos->second) {
        if (used_[j] || (prev_j != kNone && j == prev_j + 1)) continue;
        try_match(j);
      }
    }
    auto& budget = skips_[c];
    if (budget > 0) {
      --budget;
      search(i + 1, links);
      ++budget;
    }
  }

  const CharSeq& h_;
  const CharSeq& r_;
  std::size_t budget_;
  std::size_t nodes_ = 0;
  std::size_t matches_ = 0;
  std::size_t matched_ = 0;
  std::size_t best_links_ = 0;
  std::map<char32_t, std::size_t> skips_;
  std::map<char32_t, std::vector<std::size_t>> positions_;
  std::vector<std::size_t> link_bound_;
  std::vector<bool> used_;
  std::vector<std::size_t> assign_;
};

}  // namespace

MeteorAlignment meteor_align(const CharSeq& hyp, const CharSeq& ref, std::size_t node_budget) {
  return ChunkSearch(hyp, ref, node_budget).run();
}

double meteor_sentence(const CharSeq& hyp, const CharSeq& ref, const MeteorParams& p, MeteorAlignment* alignment) {
  const auto a = meteor_align(hyp, ref);
  if (alignment) *alignment = a;
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double prec = m / static_cast<double>(hyp.size());
  const double rec = m / static_cast<double>(ref.size());
  const double fmean = prec * rec / (p.alpha * prec + (1.0 - p.alpha) * rec);
  const double penalty = p.gamma * std::pow(static_cast<double>(a.chunks) / m, p.beta);
  return fmean * (1.0 - penalty);
}

double meteor(const std::vector<CharSeq>& hyps, const std::vector<CharSeq>& refs, const MeteorParams& p) {
  check_corpus(hyps.size(), refs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += meteor_sentence(hyps[i], refs[i], p);
  return sum / static_cast<double>(hyps.size());
}

nlohmann::json MetricReport::to_json(bool per_sentence) const {
  nlohmann::json j = {
      {"bleu3", bleu3},
      {"rouge_l", rouge_l},
      {"meteor", meteor},
      {"sentences", sentences.size()},
      {"bleu_counts",
       {{"matches", bleu_totals.matches}, {"totals", bleu_totals.totals},
        {"hyp_length", bleu_totals.hyp_length}, {"ref_length", bleu_totals.ref_length}}}};
  if (per_sentence) {
    auto rows = nlohmann::json::array();
    for (const auto& s : sentences) {
      rows.push_back({{"bleu3", s.bleu3}, {"rouge_l", s.rouge_l}, {"meteor", s.meteor},
                      {"lcs", s.lcs}, {"matches", s.matches}, {"chunks", s.chunks}});
    }
    j["per_sentence"] = std::move(rows);
  }
  return j;
}

std::string MetricReport::per_sentence_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "index,bleu3,rouge_l,meteor,lcs,matches,chunks\n";
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    os << i << ',' << s.bleu3 << ',' << s.rouge_l << ',' << s.meteor << ',' << s.lcs << ',' << s.matches << ','
       << s.chunks << '\n';
  }
  return os.str();
}

MetricReport evaluate_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  check_corpus(hyps.size(), refs.size());
  std::vector<CharSeq> h, r;
  for (const auto& s : hyps) h.push_back(utf8::decode(s));
  for (const auto& s : refs) r.push_back(utf8::decode(s));
  MetricReport rep;
  rep.bleu3 = bleu3(h, r, &rep.bleu_totals);
  double rsum = 0.0, msum = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    SentenceScores s;
    s.bleu3 = bleu3_from_counts(bleu_counts(h[i], r[i]));
    s.lcs = lcs_length(h[i], r[i]);
    s.rouge_l = rouge_l_sentence(h[i], r[i]);
    MeteorAlignment a;
    s.meteor = meteor_sentence(h[i], r[i], {}, &a);
    s.matches = a.matches;
    s.chunks = a.chunks;
    rsum += s.rouge_l;
    msum += s.meteor;
    rep.sentences.push_back(s);
  }
  rep.rouge_l = rsum / static_cast<double>(h.size());
  rep.meteor = msum / static_cast<double>(h.size());
  return rep;
}

}  // namespace mapgn
