#ifndef MAPGN_PIPELINE_HPP
#define MAPGN_PIPELINE_HPP

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mapgn/config.hpp"
#include "mapgn/corpus.hpp"
#include "mapgn/decoding.hpp"
#include "mapgn/training.hpp"
#include "mapgn/vocab.hpp"

namespace mapgn {

// Sentences containing characters outside the vocabulary are dropped, since an
// UNK inside a masked span would have to be predicted. `skipped` counts them.
std::vector<std::vector<TokenId>> encode_unpaired(const Vocab& vocab, const std::vector<std::string>& sentences,
                                                  std::size_t* skipped = nullptr);
std::vector<SeqPair> encode_pairs(const Vocab& vocab, const std::vector<TextPair>& pairs, int max_len);

template <typename S>
struct TrainOutcome {
  ParameterSet<S> params;
  AdamState<S> optimizer;
  std::vector<LossRecord> log;
  double best_valid_loss = std::numeric_limits<double>::quiet_NaN();
  std::int64_t best_step = 0;
};

using StepCallback = std::function<void(const LossRecord&)>;

template <typename S>
TrainOutcome<S> pretrain(const ModelConfig& mc, const TrainConfig& tc, const MaskingSpec& spec,
                         std::vector<std::vector<TokenId>> sentences, ParameterSet<S> init,
                         std::optional<AdamState<S>> resume = std::nullopt, const StepCallback& on_step = {}) {
  if (sentences.empty()) throw DataError("pretrain: no usable sentences");
  TrainOutcome<S> out;
  out.params = std::move(init);
  Trainer<S> trainer(mc, out.params, tc,
                     masked_examples(std::move(sentences), spec, static_cast<std::size_t>(mc.vocab_size), tc.seed,
                                     mc.max_len));
  if (resume) trainer.set_optimizer(std::move(*resume));
  out.log = trainer.run(trainer.total_steps() - trainer.step(), on_step);
  out.optimizer = trainer.optimizer();
  return out;
}

// Trains on `train`; with select_best, returns the parameters that scored the
// lowest unsmoothed validation loss among the evaluation points.
template <typename S>
TrainOutcome<S> finetune(const ModelConfig& mc, const TrainConfig& tc, const FinetuneOptions& fo,
                         std::vector<SeqPair> train, const std::vector<SeqPair>& valid, ParameterSet<S> init,
                         const StepCallback& on_step = {}) {
  if (train.empty()) throw DataError("finetune: empty training set");
  TrainOutcome<S> out;
  out.params = std::move(init);
  Trainer<S> trainer(mc, out.params, tc, fixed_examples(std::move(train)));
  const std::int64_t every =
      fo.eval_every > 0 ? fo.eval_every : static_cast<std::int64_t>(trainer.batches_per_epoch());
  const bool select = fo.select_best && !valid.empty();
  ParameterSet<S> best;
  auto consider = [&] {
    const double v = evaluate_teacher_forced(mc, out.params, valid, static_cast<std::size_t>(tc.batch_size)).loss;
    if (!(v >= out.best_valid_loss)) {  // also true while best is NaN
      out.best_valid_loss = v;
      out.best_step = trainer.step();
      best = out.params;
    }
  };
  while (trainer.step() < trainer.total_steps()) {
    auto chunk = trainer.run(std::min(every, trainer.total_steps() - trainer.step()), on_step);
    out.log.insert(out.log.end(), chunk.begin(), chunk.end());
    if (select) consider();
  }
  out.optimizer = trainer.optimizer();
  if (select) {
    for (auto& [name, p] : out.params) p.value = best.at(name).value;
  } else if (!valid.empty()) {
    out.best_valid_loss = evaluate_teacher_forced(mc, out.params, valid, static_cast<std::size_t>(tc.batch_size)).loss;
    out.best_step = trainer.step();
  }
  return out;
}

template <typename S>
Hypothesis decode_one(const Seq2Seq<S>& model, ParameterSet<S>& params, std::vector<TokenId> source,
                      const DecodeOptions& opt, int max_source_len) {
  if (source.size() > static_cast<std::size_t>(max_source_len)) source.resize(static_cast<std::size_t>(max_source_len));
  const int cap = effective_max_len(opt, source.size());
  if (opt.beam == 1 && !opt.length_normalize) return greedy_decode(model, params, source, cap);
  return beam_decode(model, params, source, BeamOptions{opt.beam, cap, opt.length_normalize});
}

template <typename S>
std::vector<std::string> decode_lines(const ModelConfig& mc, ParameterSet<S>& params, const Vocab& vocab,
                                      const std::vector<std::string>& sources, const DecodeOptions& opt) {
  Seq2Seq<S> model(mc, params);
  std::vector<std::string> out;
  out.reserve(sources.size());
  for (const auto& s : sources) {
    auto ids = vocab.encode(s);
    if (ids.empty()) {
      out.emplace_back();
      continue;
    }
    out.push_back(vocab.decode(decode_one(model, params, std::move(ids), opt, mc.max_len).tokens));
  }
  return out;
}

}  // namespace mapgn

#endif  // MAPGN_PIPELINE_HPP
