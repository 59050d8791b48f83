#include "mapgn/pipeline.hpp"

#include <algorithm>

namespace mapgn {

std::vector<std::vector<TokenId>> encode_unpaired(const Vocab& vocab, const std::vector<std::string>& sentences,
                                                  std::size_t* skipped) {
  std::vector<std::vector<TokenId>> out;
  std::size_t dropped = 0;
  for (const auto& s : sentences) {
    auto ids = vocab.encode(s);
    if (ids.empty() || std::find(ids.begin(), ids.end(), kUnk) != ids.end()) {
      ++dropped;
      continue;
    }
    out.push_back(std::move(ids));
  }
  if (skipped) *skipped = dropped;
  return out;
}

std::vector<SeqPair> encode_pairs(const Vocab& vocab, const std::vector<TextPair>& pairs, int max_len) {
  std::vector<SeqPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(make_finetune_pair(vocab.encode(p.source), vocab.encode(p.target), max_len));
  return out;
}

}  // namespace mapgn
