#ifndef MAPGN_TRAINING_HPP
#define MAPGN_TRAINING_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mapgn/masking.hpp"
#include "mapgn/model.hpp"

namespace mapgn {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double label_smoothing = 0.1;
  int batch_size = 64;
  int epochs = 10;
  std::int64_t max_steps = 0;  // 0: run `epochs` full passes
  double grad_clip = 5.0;      // global-norm clip; 0 disables
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// One teacher-forced training instance: the decoder consumes `decoder_input`
// and is scored against `targets` (same length).
struct SeqPair {
  std::vector<TokenId> source;
  std::vector<TokenId> decoder_input;
  std::vector<TokenId> targets;
};

// Paired example: source X, decoder input BOS ++ Y, targets Y ++ EOS. Both
// sides are truncated so every sequence fits in `max_len`.
SeqPair make_finetune_pair(std::vector<TokenId> source, std::vector<TokenId> target, int max_len);
SeqPair make_pretrain_pair(const MaskedExample& ex);

// -sum_t q[t] log(dist[t] + floor) with q = (1-eps) onehot(target) + eps/V_eff.
// V_eff is dist.size(), less one when `excluded` names an id (PAD) that is
// kept out of the smoothing support.
double smoothed_nll(std::span<const double> dist, TokenId target, double epsilon,
                    std::optional<TokenId> excluded = std::nullopt);

struct LossOptions {
  double label_smoothing = 0.0;
  bool training = false;
};

// Sum over the batch of per-sequence summed smoothed NLL, divided by the batch
// size. PAD steps (beyond a row's target length) contribute nothing.
template <typename S>
Tensor<S> sequence_loss(const Seq2Seq<S>& model, Bound<S>& P, const std::vector<const SeqPair*>& batch,
                        const LossOptions& opt, Rng* rng) {
  if (batch.empty()) throw DataError("loss: empty batch");
  IdBatch src, dec;
  std::size_t L = 0;
  for (const SeqPair* ex : batch) {
    if (ex->decoder_input.size() != ex->targets.size() || ex->targets.empty()) {
      throw DataError("loss: decoder input and targets must be non-empty and equally long");
    }
    src.rows.push_back(ex->source);
    dec.rows.push_back(ex->decoder_input);
    L = std::max(L, ex->targets.size());
  }
  auto outs = model.forward_teacher_forced(P, src, dec, opt.training, rng);
  const SmoothingSpec sm{opt.label_smoothing, kPad, 1e-12};
  const S w = S(1) / static_cast<S>(batch.size());
  std::vector<TokenId> targets(batch.size());
  std::vector<S> weights(batch.size());
  Tensor<S> total;
  for (std::size_t n = 0; n < L; ++n) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const bool real = n < batch[b]->targets.size();
      targets[b] = real ? batch[b]->targets[n] : kPad;
      weights[b] = real ? w : S(0);
    }
    auto term = smoothed_nll_rows(outs[n].dist, std::span<const TokenId>(targets), std::span<const S>(weights), sm);
    total = total.valid() ? add(total, term) : term;
  }
  return total;
}

// Eq.-5 style loss over paired data (decoder input BOS ++ Y, targets Y ++ EOS).
template <typename S>
Tensor<S> fine_tune_loss(const Seq2Seq<S>& model, Bound<S>& P, const std::vector<const SeqPair*>& batch,
                         const LossOptions& opt, Rng* rng) {
  return sequence_loss(model, P, batch, opt, rng);
}

// Span-reconstruction loss: encoder sees the corrupted sentence, decoder is fed
// y_{a-1} ++ y_{a:b-1} and scored on y_{a:b}.
template <typename S>
Tensor<S> pretrain_loss(const Seq2Seq<S>& model, Bound<S>& P, const std::vector<MaskedExample>& batch,
                        const LossOptions& opt, Rng* rng) {
  std::vector<SeqPair> pairs;
  pairs.reserve(batch.size());
  for (const auto& ex : batch) pairs.push_back(make_pretrain_pair(ex));
  std::vector<const SeqPair*> ptrs;
  for (const auto& p : pairs) ptrs.push_back(&p);
  return sequence_loss(model, P, ptrs, opt, rng);
}

// ---------------------------------------------------------------------------
// Adam

template <typename S>
struct AdamState {
  std::map<std::string, Matrix<S>> m;
  std::map<std::string, Matrix<S>> v;
  std::int64_t step = 0;
};

template <typename S>
double global_grad_norm(const ParameterSet<S>& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (p.grad.size() != 0) sq += static_cast<double>(p.grad.squaredNorm());
  }
  return std::sqrt(sq);
}

// Bias-corrected Adam over every parameter's accumulated gradient, after
// optional global-norm clipping. Throws NumericError naming the first
// parameter with a non-finite gradient.
template <typename S>
void adam_step(ParameterSet<S>& params, AdamState<S>& state, const TrainConfig& cfg) {
  for (auto& [name, p] : params) {
    if (p.grad.size() == 0) p.zero_grad();
    if (!p.grad.allFinite()) throw NumericError("non-finite gradient in parameter '" + name + "'");
  }
  S clip_scale = 1;
  if (cfg.grad_clip > 0) {
    const double norm = global_grad_norm(params);
    if (norm > cfg.grad_clip) clip_scale = static_cast<S>(cfg.grad_clip / norm);
  }
  ++state.step;
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S c1 = S(1) - static_cast<S>(std::pow(cfg.beta1, static_cast<double>(state.step)));
  const S c2 = S(1) - static_cast<S>(std::pow(cfg.beta2, static_cast<double>(state.step)));
  const S lr = static_cast<S>(cfg.lr), eps = static_cast<S>(cfg.eps);
  for (auto& [name, p] : params) {
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() == 0) m.setZero(p.value.rows(), p.value.cols());
    if (v.size() == 0) v.setZero(p.value.rows(), p.value.cols());
    const auto g = (p.grad.array() * clip_scale).eval();
    m.array() = b1 * m.array() + (S(1) - b1) * g;
    v.array() = b2 * v.array() + (S(1) - b2) * g.square();
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
}

template <typename S>
void zero_grads(ParameterSet<S>& params) {
  for (auto& [name, p] : params) p.zero_grad();
}

// ---------------------------------------------------------------------------
// Batching

// Shuffles with `rng`, sorts pools of 50 batches by source length, cuts them
// into batches, then shuffles the batch order. Returns example indices.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<SeqPair>& examples, std::size_t batch_size,
                                                   Rng& rng);

using ExampleFn = std::function<std::vector<SeqPair>(std::uint64_t epoch)>;

struct LossRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

// Stream keys. Every random decision in training is drawn from a stream keyed
// by the run seed plus one of these and a position (epoch, step, example).
inline constexpr std::uint64_t kShuffleStream = 0x5348;
inline constexpr std::uint64_t kDropoutStream = 0x4452;
inline constexpr std::uint64_t kMaskingStream = 0x4d41;

// Single-writer trainer. The data for epoch e and the dropout noise for step s
// are pure functions of (seed, e) and (seed, s), so a run resumed from a
// checkpoint at step s continues exactly like an uninterrupted one.
template <typename S>
class Trainer {
 public:
  Trainer(const ModelConfig& mc, ParameterSet<S>& params, TrainConfig tc, ExampleFn examples)
      : model_(mc, params), params_(&params), cfg_(std::move(tc)), examples_(std::move(examples)),
        start_(std::chrono::steady_clock::now()) {
    cfg_.validate();
    load_epoch(0);
    if (epoch_data_.empty()) throw DataError("train: empty dataset");
  }

  const Seq2Seq<S>& model() const { return model_; }
  AdamState<S>& optimizer() { return state_; }
  const AdamState<S>& optimizer() const { return state_; }
  void set_optimizer(AdamState<S> st) { state_ = std::move(st); }
  std::int64_t step() const { return state_.step; }
  std::size_t batches_per_epoch() const { return batches_.size(); }

  std::int64_t total_steps() const {
    return cfg_.max_steps > 0 ? cfg_.max_steps
                              : static_cast<std::int64_t>(cfg_.epochs) * static_cast<std::int64_t>(batches_.size());
  }

  LossRecord train_step() {
    const std::int64_t s = state_.step + 1;  // 1-based step being taken
    const auto per_epoch = static_cast<std::int64_t>(batches_.size());
    const auto epoch = static_cast<std::uint64_t>((s - 1) / per_epoch);
    if (epoch != loaded_epoch_) load_epoch(epoch);
    const auto& idx = batches_[static_cast<std::size_t>((s - 1) % per_epoch)];
    std::vector<const SeqPair*> batch;
    for (auto i : idx) batch.push_back(&epoch_data_[i]);

    zero_grads(*params_);
    Rng drop = Rng::keyed(cfg_.seed, {kDropoutStream, static_cast<std::uint64_t>(s)});
    Tape<S> tape;
    Bound<S> P(tape, *params_);
    auto loss = sequence_loss(model_, P, batch, {cfg_.label_smoothing, true}, &drop);
    const double value = static_cast<double>(loss.item());
    if (!std::isfinite(value)) throw NumericError("non-finite loss at step " + std::to_string(s));
    tape.backward(loss);
    adam_step(*params_, state_, cfg_);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return {s, value, cfg_.lr, secs};
  }

  // Runs up to `n` steps without exceeding total_steps().
  std::vector<LossRecord> run(std::int64_t n, const std::function<void(const LossRecord&)>& on_step = {}) {
    std::vector<LossRecord> log;
    for (std::int64_t i = 0; i < n && state_.step < total_steps(); ++i) {
      log.push_back(train_step());
      if (on_step) on_step(log.back());
    }
    return log;
  }

 private:
  void load_epoch(std::uint64_t epoch) {
    epoch_data_ = examples_(epoch);
    Rng rng = Rng::keyed(cfg_.seed, {kShuffleStream, epoch});
    batches_ = make_batches(epoch_data_, static_cast<std::size_t>(cfg_.batch_size), rng);
    loaded_epoch_ = epoch;
  }

  Seq2Seq<S> model_;
  ParameterSet<S>* params_;
  TrainConfig cfg_;
  ExampleFn examples_;
  AdamState<S> state_;
  std::vector<SeqPair> epoch_data_;
  std::vector<std::vector<std::size_t>> batches_;
  std::uint64_t loaded_epoch_ = 0;
  std::chrono::steady_clock::time_point start_;
};

// Fixed paired data, the same every epoch.
inline ExampleFn fixed_examples(std::vector<SeqPair> data) {
  return [data = std::move(data)](std::uint64_t) { return data; };
}

// Fresh span corruptions every epoch; example i of epoch e uses the stream
// keyed by (seed, e, i). Sentences are truncated to max_len.
ExampleFn masked_examples(std::vector<std::vector<TokenId>> sentences,
                                                                   MaskingSpec spec, std::size_t vocab_size,
                                                                   std::uint64_t seed, int max_len);

// ---------------------------------------------------------------------------
// Evaluation helpers

struct TeacherForcedStats {
  double loss = 0.0;        // mean per-sequence loss (smoothing as requested)
  double accuracy = 0.0;    // argmax == target over real steps
  double mean_pgen_copy = 0.0;  // mean P_gen where the target occurs in the source
  std::size_t tokens = 0;
};

template <typename S>
TeacherForcedStats evaluate_teacher_forced(const ModelConfig& mc, ParameterSet<S>& params,
                                           const std::vector<SeqPair>& data, std::size_t batch_size,
                                           double label_smoothing = 0.0) {
  TeacherForcedStats st;
  if (data.empty()) return st;
  Seq2Seq<S> model(mc, params);
  std::size_t correct = 0, copy_positions = 0;
  double loss_sum = 0.0, pgen_sum = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<const SeqPair*> batch;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) batch.push_back(&data[i]);
    Tape<S> tape;
    tape.set_grad_enabled(false);
    Bound<S> P(tape, params);
    IdBatch src, dec;
    for (auto* ex : batch) {
      src.rows.push_back(ex->source);
      dec.rows.push_back(ex->decoder_input);
    }
    auto outs = model.forward_teacher_forced(P, src, dec, false, nullptr);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto& ex = *batch[b];
      for (std::size_t n = 0; n < ex.targets.size(); ++n) {
        const auto& dist = outs[n].dist.value();
        Eigen::Index arg;
        dist.row(static_cast<Eigen::Index>(b)).maxCoeff(&arg);
        if (arg == ex.targets[n]) ++correct;
        std::vector<double> row(static_cast<std::size_t>(dist.cols()));
        for (Eigen::Index c = 0; c < dist.cols(); ++c) row[static_cast<std::size_t>(c)] = static_cast<double>(dist(static_cast<Eigen::Index>(b), c));
        loss_sum += smoothed_nll(row, ex.targets[n], label_smoothing, kPad);
        ++st.tokens;
        if (outs[n].p_gen.valid() &&
            std::find(ex.source.begin(), ex.source.end(), ex.targets[n]) != ex.source.end()) {
          pgen_sum += static_cast<double>(outs[n].p_gen.value()(static_cast<Eigen::Index>(b), 0));
          ++copy_positions;
        }
      }
    }
  }
  st.loss = loss_sum / static_cast<double>(data.size());
  st.accuracy = st.tokens ? static_cast<double>(correct) / static_cast<double>(st.tokens) : 0.0;
  st.mean_pgen_copy = copy_positions ? pgen_sum / static_cast<double>(copy_positions) : 0.0;
  return st;
}

// ---------------------------------------------------------------------------
// Transfer

template <typename S>
struct TransferResult {
  ParameterSet<S> params;
  std::vector<std::string> copied;
  std::vector<std::string> initialized;
};

// Copies every parameter whose name exists in both sets; names only in the
// target architecture are freshly initialized from `seed`.
template <typename S>
TransferResult<S> transfer_params(const ParameterSet<S>& pretrained, const ModelConfig& target, std::uint64_t seed) {
  TransferResult<S> out;
  for (const auto& [name, shape] : parameter_shapes(target)) {
    Parameter<S> p;
    auto it = pretrained.find(name);
    if (it != pretrained.end()) {
      if (it->second.value.rows() != shape.first || it->second.value.cols() != shape.second) {
        throw ConfigError("transfer: parameter '" + name + "' has shape " +
                          shape_str(it->second.value.rows(), it->second.value.cols()) + ", target expects " +
                          shape_str(shape.first, shape.second));
      }
      p.value = it->second.value;
      out.copied.push_back(name);
    } else {
      p.value.resize(shape.first, shape.second);
      initialize_parameter(name, p, seed);
      out.initialized.push_back(name);
    }
    p.zero_grad();
    out.params.emplace(name, std::move(p));
  }
  return out;
}

}  // namespace mapgn

#endif  // MAPGN_TRAINING_HPP
