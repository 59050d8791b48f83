#ifndef MAPGN_DECODING_HPP
#define MAPGN_DECODING_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mapgn/model.hpp"

namespace mapgn {

struct Hypothesis {
  std::vector<TokenId> tokens;  // without BOS/EOS
  double log_prob = 0.0;
  bool finished = false;
};

struct BeamOptions {
  std::size_t beam = 1;
  int max_len = 200;
  bool length_normalize = false;
};

namespace detail {

// First index of the largest entry in row `r`.
template <typename S>
TokenId argmax_row(const Matrix<S>& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    if (m(r, c) > m(r, best)) best = c;
  }
  return static_cast<TokenId>(best);
}

template <typename S>
double log_of(S p) {
  return std::log(static_cast<double>(p));
}

// Encoder states of a single source replicated for `k` decoder rows.
template <typename S>
EncoderStates<S> replicate(const EncoderStates<S>& enc, Eigen::Index k) {
  std::vector<Eigen::Index> rows;
  for (Eigen::Index m = 0; m < enc.length; ++m) {
    for (Eigen::Index j = 0; j < k; ++j) rows.push_back(m);
  }
  EncoderStates<S> out = enc;
  out.H = gather_rows(enc.H, std::span<const Eigen::Index>(rows));
  out.keys = gather_rows(enc.keys, std::span<const Eigen::Index>(rows));
  out.mask = enc.mask.row(0).replicate(k, 1);
  out.source_ids.assign(static_cast<std::size_t>(k), enc.source_ids.front());
  out.batch = k;
  return out;
}

template <typename S>
DecoderState<S> select_rows(const DecoderState<S>& st, const std::vector<Eigen::Index>& rows) {
  DecoderState<S> out;
  for (const auto& l : st.layers) {
    out.layers.push_back({gather_rows(l.h, std::span<const Eigen::Index>(rows)),
                          gather_rows(l.c, std::span<const Eigen::Index>(rows))});
  }
  return out;
}

}  // namespace detail

// Argmax decoding until EOS or `max_len` steps.
template <typename S>
Hypothesis greedy_decode(const Seq2Seq<S>& model, ParameterSet<S>& params, const std::vector<TokenId>& source,
                         int max_len) {
  if (source.empty()) throw DataError("decode: empty source");
  Tape<S> tape;
  tape.set_grad_enabled(false);
  Bound<S> P(tape, params);
  IdBatch src{{source}};
  auto enc = detail::replicate(model.encode(P, src, false, nullptr), 1);
  auto state = model.initial_state(P, enc);
  state = detail::select_rows(state, {0});
  Hypothesis hyp;
  TokenId input = kBos;
  for (int n = 0; n < max_len; ++n) {
    auto out = model.step(P, enc, state, std::span<const TokenId>(&input, 1), false, nullptr);
    const auto& dist = out.dist.value();
    const TokenId best = detail::argmax_row(dist, 0);
    hyp.log_prob += detail::log_of(dist(0, best));
    if (best == kEos) {
      hyp.finished = true;
      break;
    }
    hyp.tokens.push_back(best);
    input = best;
  }
  return hyp;
}

// Beam search over summed log-probabilities. Finished hypotheses compete with
// each other by total score (optionally length-normalized); search stops when
// no live hypothesis can beat the best finished one. beam = 1 reproduces
// greedy_decode exactly.
template <typename S>
Hypothesis beam_decode(const Seq2Seq<S>& model, ParameterSet<S>& params, const std::vector<TokenId>& source,
                       const BeamOptions& opt) {
  if (source.empty()) throw DataError("decode: empty source");
  if (opt.beam < 1) throw ConfigError("decode: beam must be >= 1");
  Tape<S> tape;
  tape.set_grad_enabled(false);
  Bound<S> P(tape, params);
  IdBatch src{{source}};
  const auto base = model.encode(P, src, false, nullptr);
  auto init = model.initial_state(P, base);

  struct Live {
    Hypothesis hyp;
    Eigen::Index row;
  };
  auto final_score = [&](const Hypothesis& h) {
    if (!opt.length_normalize) return h.log_prob;
    return h.log_prob / static_cast<double>(h.tokens.size() + (h.finished ? 1 : 0));
  };

  std::vector<Live> live{{Hypothesis{}, 0}};
  std::vector<Hypothesis> finished;
  DecoderState<S> state = detail::select_rows(init, {0});

  for (int n = 0; n < opt.max_len && !live.empty(); ++n) {
    const auto k = static_cast<Eigen::Index>(live.size());
    auto enc = detail::replicate(base, k);
    std::vector<TokenId> inputs;
    for (const auto& l : live) inputs.push_back(l.hyp.tokens.empty() ? kBos : l.hyp.tokens.back());
    auto out = model.step(P, enc, state, std::span<const TokenId>(inputs), false, nullptr);
    const auto& dist = out.dist.value();

    struct Cand {
      double score;
      std::size_t parent;
      std::size_t rank;  // position of the token in the parent's own ordering
      TokenId token;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      std::vector<TokenId> order(static_cast<std::size_t>(dist.cols()));
      for (std::size_t t = 0; t < order.size(); ++t) order[t] = static_cast<TokenId>(t);
      std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) { return dist(r, a) > dist(r, b); });
      const std::size_t keep = std::min(order.size(), opt.beam);
      for (std::size_t q = 0; q < keep; ++q) {
        cands.push_back({live[i].hyp.log_prob + detail::log_of(dist(r, order[q])), i, q, order[q]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.rank < b.rank;
    });
    if (cands.size() > opt.beam) cands.resize(opt.beam);

    std::vector<Live> next;
    std::vector<Eigen::Index> rows;
    for (const auto& c : cands) {
      Hypothesis h = live[c.parent].hyp;
      h.log_prob = c.score;
      if (c.token == kEos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        rows.push_back(static_cast<Eigen::Index>(c.parent));
        next.push_back({std::move(h), static_cast<Eigen::Index>(next.size())});
      }
    }
    live = std::move(next);
    if (!live.empty()) state = detail::select_rows(state, rows);

    if (!finished.empty() && !live.empty() && !opt.length_normalize) {
      double best_finished = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_finished = std::max(best_finished, final_score(f));
      double best_live = -std::numeric_limits<double>::infinity();
      for (const auto& l : live) best_live = std::max(best_live, l.hyp.log_prob);
      if (best_finished >= best_live) live.clear();
    }
  }
  // Hypotheses still live at max_len compete with the finished ones.
  std::vector<Hypothesis> pool = finished;
  for (auto& l : live) pool.push_back(l.hyp);
  if (pool.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (final_score(pool[i]) > final_score(pool[best])) best = i;
  }
  return pool[best];
}

}  // namespace mapgn

#endif  // MAPGN_DECODING_HPP
