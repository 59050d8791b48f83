#include "mapgn/training.hpp"

#include <numeric>

namespace mapgn {

void TrainConfig::validate() const {
  std::string msg;
  auto need = [&](bool ok, const char* what) {
    if (!ok) msg += std::string(msg.empty() ? "" : "; ") + what;
  };
  need(lr > 0, "train.lr must be positive");
  need(beta1 >= 0 && beta1 < 1, "train.beta1 must lie in [0, 1)");
  need(beta2 >= 0 && beta2 < 1, "train.beta2 must lie in [0, 1)");
  need(eps > 0, "train.eps must be positive");
  need(label_smoothing >= 0 && label_smoothing < 1, "train.label_smoothing must lie in [0, 1)");
  need(batch_size >= 1, "train.batch_size must be >= 1");
  need(epochs >= 1 || max_steps > 0, "train.epochs must be >= 1 unless train.max_steps is set");
  need(max_steps >= 0, "train.max_steps must be >= 0");
  need(grad_clip >= 0, "train.grad_clip must be >= 0");
  if (!msg.empty()) throw ConfigError(msg);
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},         {"beta1", beta1},         {"beta2", beta2},
          {"eps", eps},       {"label_smoothing", label_smoothing}, {"batch_size", batch_size},
          {"epochs", epochs}, {"max_steps", max_steps}, {"grad_clip", grad_clip},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.label_smoothing = j.at("label_smoothing").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.max_steps = j.at("max_steps").get<std::int64_t>();
  c.grad_clip = j.at("grad_clip").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

SeqPair make_finetune_pair(std::vector<TokenId> source, std::vector<TokenId> target, int max_len) {
  const auto limit = static_cast<std::size_t>(max_len);
  if (source.size() > limit) source.resize(limit);
  if (target.size() + 1 > limit) target.resize(limit - 1);
  SeqPair p;
  p.source = std::move(source);
  p.decoder_input.push_back(kBos);
  p.decoder_input.insert(p.decoder_input.end(), target.begin(), target.end());
  p.targets = std::move(target);
  p.targets.push_back(kEos);
  return p;
}

SeqPair make_pretrain_pair(const MaskedExample& ex) { return {ex.encoder_input, ex.decoder_input, ex.targets}; }

double smoothed_nll(std::span<const double> dist, TokenId target, double epsilon, std::optional<TokenId> excluded) {
  const auto V = static_cast<TokenId>(dist.size());
  if (target < 0 || target >= V) throw DataError("smoothed_nll: target out of range");
  const bool has_ex = excluded && *excluded >= 0 && *excluded < V;
  const double support = static_cast<double>(V - (has_ex ? 1 : 0));
  double loss = 0.0;
  for (TokenId t = 0; t < V; ++t) {
    if (has_ex && t == *excluded) continue;
    const double q = (t == target ? 1.0 - epsilon : 0.0) + epsilon / support;
    if (q != 0.0) loss -= q * std::log(dist[static_cast<std::size_t>(t)] + 1e-12);
  }
  return loss;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<SeqPair>& examples, std::size_t batch_size,
                                                   Rng& rng) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(rng, order);
  const std::size_t pool = batch_size * 50;
  for (std::size_t s = 0; s < order.size(); s += pool) {
    auto first = order.begin() + static_cast<std::ptrdiff_t>(s);
    auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + pool));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return examples[a].source.size() < examples[b].source.size();
    });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t s = 0; s < order.size(); s += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), s + batch_size)));
  }
  shuffle(rng, batches);
  return batches;
}

ExampleFn masked_examples(std::vector<std::vector<TokenId>> sentences, MaskingSpec spec, std::size_t vocab_size,
                          std::uint64_t seed, int max_len) {
  spec.validate();
  for (auto& s : sentences) {
    if (s.size() > static_cast<std::size_t>(max_len)) s.resize(static_cast<std::size_t>(max_len));
  }
  return [sentences = std::move(sentences), spec, vocab_size, seed](std::uint64_t epoch) {
    std::vector<SeqPair> out;
    out.reserve(sentences.size());
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      Rng rng = Rng::keyed(seed, {kMaskingStream, epoch, i});
      out.push_back(make_pretrain_pair(build_pretrain_example(sentences[i], spec, vocab_size, rng)));
    }
    return out;
  };
}

}  // namespace mapgn
