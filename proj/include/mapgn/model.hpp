#ifndef MAPGN_MODEL_HPP
#define MAPGN_MODEL_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mapgn/rng.hpp"
#include "mapgn/tensor.hpp"
#include "mapgn/vocab.hpp"

namespace mapgn {

enum class Arch { kEncoderDecoder, kPointerGenerator };

std::string to_string(Arch a);
Arch parse_arch(const std::string& s);

struct ModelConfig {
  Arch arch = Arch::kPointerGenerator;
  int emb_dim = 512;
  int enc_layers = 4;
  int enc_hidden = 256;  // per direction
  int dec_layers = 2;
  int dec_hidden = 256;
  int vocab_size = 0;
  double dropout = 0.1;
  int max_len = 200;

  // Collects every violation into one ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Named parameter map. Names are stable across architectures so the shared
// subset can be transferred; the pointer-generator adds the "copy.*" head.
template <typename S>
using ParameterSet = std::map<std::string, Parameter<S>>;

// Name -> shape for every parameter of `cfg`.
std::map<std::string, std::pair<int, int>> parameter_shapes(const ModelConfig& cfg);

// Uniform(-0.1, 0.1) weights, zero biases, forget-gate bias 1. Each tensor is
// drawn from its own stream keyed by (seed, name) so the shared subset is
// initialized identically in both architectures.
template <typename S>
void initialize_parameter(const std::string& name, Parameter<S>& p, std::uint64_t seed) {
  const bool is_bias = name.size() >= 2 && (name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") ||
                                            name.ends_with(".bh") || name.ends_with(".bc"));
  if (is_bias) {
    p.value.setZero();
    // LSTM gates are laid out [input | forget | cell | output].
    if (name.ends_with(".b") && (name.starts_with("enc.") || name.starts_with("dec."))) {
      const Eigen::Index h = p.value.cols() / 4;
      p.value.middleCols(h, h).setOnes();
    }
  } else {
    std::uint64_t key = 1469598103934665603ULL;  // FNV-1a over the name
    for (unsigned char c : name) key = (key ^ c) * 1099511628211ULL;
    Rng rng = Rng::keyed(seed, {key});
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = static_cast<S>(uniform_real(rng, -0.1, 0.1));
    }
  }
  p.zero_grad();
}

template <typename S>
ParameterSet<S> make_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterSet<S> params;
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    Parameter<S> p;
    p.value.resize(shape.first, shape.second);
    initialize_parameter(name, p, seed);
    params.emplace(name, std::move(p));
  }
  return params;
}

template <typename S>
ParameterSet<S> zero_parameters(const ModelConfig& cfg) {
  cfg.validate();
  ParameterSet<S> params;
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    Parameter<S> p;
    p.value.setZero(shape.first, shape.second);
    p.zero_grad();
    params.emplace(name, std::move(p));
  }
  return params;
}

// Parameters bound to one tape, created on first use.
template <typename S>
class Bound {
 public:
  Bound(Tape<S>& tape, ParameterSet<S>& params) : tape_(&tape), params_(&params) {}

  Tensor<S> operator[](const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    auto p = params_->find(name);
    if (p == params_->end()) throw ContractError("missing parameter '" + name + "'");
    auto t = tape_->parameter(p->second);
    cache_.emplace(name, t);
    return t;
  }

  Tape<S>& tape() { return *tape_; }

 private:
  Tape<S>* tape_;
  ParameterSet<S>* params_;
  std::map<std::string, Tensor<S>> cache_;
};

// Variable-length id rows; shorter rows are padded with kPad where needed.
struct IdBatch {
  std::vector<std::vector<TokenId>> rows;  // unpadded
  std::size_t max_length() const {
    std::size_t m = 0;
    for (const auto& r : rows) m = std::max(m, r.size());
    return m;
  }
  std::size_t batch() const { return rows.size(); }
};

template <typename S>
struct LstmState {
  Tensor<S> h;
  Tensor<S> c;
};

template <typename S>
struct EncoderStates {
  // Top-layer states stacked by time: row m*B + b holds h_m of example b.
  Tensor<S> H;
  // W_h * h_m precomputed for attention, same row layout as H.
  Tensor<S> keys;
  // Final forward/backward states of the top layer.
  LstmState<S> final_fwd;
  LstmState<S> final_bwd;
  Matrix<S> mask;  // B x M, 1 at real positions
  std::vector<std::vector<TokenId>> source_ids;
  Eigen::Index length = 0;  // M
  Eigen::Index batch = 0;   // B
};

template <typename S>
struct DecoderState {
  std::vector<LstmState<S>> layers;
};

template <typename S>
struct StepOutput {
  Tensor<S> dist;    // B x V final distribution
  Tensor<S> alpha;   // B x M attention
  Tensor<S> gen;     // B x V generator distribution G
  Tensor<S> p_gen;   // B x 1; invalid for encoder-decoder
};

// One LSTM step. Gates are [i | f | g | o].
template <typename S>
LstmState<S> lstm_cell(const Tensor<S>& x, const LstmState<S>& prev, const Tensor<S>& W, const Tensor<S>& U,
                       const Tensor<S>& b) {
  const Eigen::Index h = U.rows();
  auto gates = add(add(matmul(x, W), matmul(prev.h, U)), b);
  auto i = sigmoid(slice_cols(gates, 0, h));
  auto f = sigmoid(slice_cols(gates, h, h));
  auto g = tanh(slice_cols(gates, 2 * h, h));
  auto o = sigmoid(slice_cols(gates, 3 * h, h));
  auto c = add(mul(f, prev.c), mul(i, g));
  return {mul(o, tanh(c)), c};
}

template <typename S>
Tensor<S> affine(const Tensor<S>& x, const Tensor<S>& W, const Tensor<S>& b) {
  return add(matmul(x, W), b);
}

// Additive attention over encoder states for a batch of decoder states v (B x Hd).
// Returns (alpha: B x M, context: B x 2He).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> attention(const EncoderStates<S>& enc, const Tensor<S>& v, Bound<S>& P) {
  if (v.rows() != enc.batch) {
    throw DimensionError("attention: decoder batch " + std::to_string(v.rows()) + " vs encoder batch " +
                         std::to_string(enc.batch));
  }
  auto q = affine(v, P["attn.W_v"], P["attn.b"]);
  auto e = tanh(add(enc.keys, tile_rows(q, enc.length)));
  auto scores = transpose(reshape(matmul(e, P["attn.w"]), enc.length, enc.batch));
  auto alpha = softmax_rows(scores, enc.mask);
  return {alpha, attend(alpha, enc.H)};
}

// G = softmax(affine2(tanh(affine1([d; v])))).
template <typename S>
Tensor<S> generator_dist(const Tensor<S>& d, const Tensor<S>& v, Bound<S>& P) {
  auto inner = tanh(affine(concat_cols<S>({d, v}), P["gen.W1"], P["gen.b1"]));
  return softmax_rows(affine(inner, P["gen.W2"], P["gen.b2"]));
}

// P_gen = sigmoid(affine2(tanh(affine1([d; v])))), B x 1.
template <typename S>
Tensor<S> copy_gate(const Tensor<S>& d, const Tensor<S>& v, Bound<S>& P) {
  auto inner = tanh(affine(concat_cols<S>({d, v}), P["copy.W1"], P["copy.b1"]));
  return sigmoid(affine(inner, P["copy.W2"], P["copy.b2"]));
}

// final[t] = P_gen * G[t] + (1 - P_gen) * sum_{m : x_m = t} alpha_m.
template <typename S>
Tensor<S> mix_distributions(const Tensor<S>& G, const Tensor<S>& p_gen, const Tensor<S>& alpha,
                            const std::vector<std::vector<TokenId>>& source_ids) {
  auto copy = scatter_to_vocab(alpha, source_ids, G.cols());
  return add(scale_rows(G, p_gen), scale_rows(copy, one_minus(p_gen)));
}

// Encoder-decoder / pointer-generator network as functions of a parameter set.
template <typename S>
class Seq2Seq {
 public:
  Seq2Seq(ModelConfig cfg, ParameterSet<S>& params) : cfg_(std::move(cfg)), params_(&params) {}

  const ModelConfig& config() const { return cfg_; }
  ParameterSet<S>& params() { return *params_; }

  EncoderStates<S> encode(Bound<S>& P, const IdBatch& src, bool training, Rng* rng) const {
    Tape<S>& tape = P.tape();
    const Eigen::Index B = static_cast<Eigen::Index>(src.batch());
    const Eigen::Index M = static_cast<Eigen::Index>(src.max_length());
    if (B == 0) throw DataError("encode: empty batch");
    for (const auto& r : src.rows) {
      if (r.empty()) throw DataError("encode: empty source sequence");
      if (static_cast<int>(r.size()) > cfg_.max_len) {
        throw DataError("encode: source length " + std::to_string(r.size()) + " exceeds max_len " +
                        std::to_string(cfg_.max_len));
      }
      check_ids(r, "encode");
    }
    EncoderStates<S> enc;
    enc.length = M;
    enc.batch = B;
    enc.source_ids = src.rows;
    enc.mask = Matrix<S>::Zero(B, M);
    std::vector<std::vector<bool>> valid(static_cast<std::size_t>(M), std::vector<bool>(static_cast<std::size_t>(B)));
    for (Eigen::Index b = 0; b < B; ++b) {
      for (Eigen::Index m = 0; m < M; ++m) {
        const bool real = m < static_cast<Eigen::Index>(src.rows[static_cast<std::size_t>(b)].size());
        valid[static_cast<std::size_t>(m)][static_cast<std::size_t>(b)] = real;
        enc.mask(b, m) = real ? S(1) : S(0);
      }
    }
    auto table = P["embedding"];
    std::vector<Tensor<S>> inputs;
    for (Eigen::Index m = 0; m < M; ++m) {
      std::vector<TokenId> ids(static_cast<std::size_t>(B));
      for (Eigen::Index b = 0; b < B; ++b) {
        const auto& r = src.rows[static_cast<std::size_t>(b)];
        ids[static_cast<std::size_t>(b)] = m < static_cast<Eigen::Index>(r.size()) ? r[static_cast<std::size_t>(m)] : kPad;
      }
      inputs.push_back(embedding(table, std::span<const TokenId>(ids)));
    }
    const Eigen::Index He = cfg_.enc_hidden;
    for (int layer = 0; layer < cfg_.enc_layers; ++layer) {
      if (layer > 0) {
        for (auto& x : inputs) x = dropout(x, cfg_.dropout, training, rng);
      }
      const std::string pre = "enc.l" + std::to_string(layer);
      LstmState<S> fwd{zeros(tape, B, He), zeros(tape, B, He)};
      LstmState<S> bwd = fwd;
      std::vector<Tensor<S>> out_f(static_cast<std::size_t>(M)), out_b(static_cast<std::size_t>(M));
      auto Wf = P[pre + ".fwd.W"], Uf = P[pre + ".fwd.U"], bf = P[pre + ".fwd.b"];
      auto Wb = P[pre + ".bwd.W"], Ub = P[pre + ".bwd.U"], bb = P[pre + ".bwd.b"];
      for (Eigen::Index m = 0; m < M; ++m) {
        const auto& keep = valid[static_cast<std::size_t>(m)];
        auto next = lstm_cell(inputs[static_cast<std::size_t>(m)], fwd, Wf, Uf, bf);
        fwd = {select(keep, next.h, fwd.h), select(keep, next.c, fwd.c)};
        out_f[static_cast<std::size_t>(m)] = fwd.h;
      }
      for (Eigen::Index m = M - 1; m >= 0; --m) {
        const auto& keep = valid[static_cast<std::size_t>(m)];
        auto next = lstm_cell(inputs[static_cast<std::size_t>(m)], bwd, Wb, Ub, bb);
        bwd = {select(keep, next.h, bwd.h), select(keep, next.c, bwd.c)};
        out_b[static_cast<std::size_t>(m)] = bwd.h;
      }
      for (Eigen::Index m = 0; m < M; ++m) {
        inputs[static_cast<std::size_t>(m)] =
            concat_cols<S>({out_f[static_cast<std::size_t>(m)], out_b[static_cast<std::size_t>(m)]});
      }
      enc.final_fwd = fwd;
      enc.final_bwd = bwd;
    }
    enc.H = stack_rows(inputs);
    enc.keys = matmul(enc.H, P["attn.W_h"]);
    return enc;
  }

  // Per decoder layer: h0 = tanh(bridge([h_f; h_b])), c0 = tanh(bridge([c_f; c_b])).
  DecoderState<S> initial_state(Bound<S>& P, const EncoderStates<S>& enc) const {
    DecoderState<S> st;
    auto hcat = concat_cols<S>({enc.final_fwd.h, enc.final_bwd.h});
    auto ccat = concat_cols<S>({enc.final_fwd.c, enc.final_bwd.c});
    for (int layer = 0; layer < cfg_.dec_layers; ++layer) {
      const std::string pre = "bridge.l" + std::to_string(layer);
      st.layers.push_back({tanh(affine(hcat, P[pre + ".Wh"], P[pre + ".bh"])),
                           tanh(affine(ccat, P[pre + ".Wc"], P[pre + ".bc"]))});
    }
    return st;
  }

  // Consumes one input token per batch row and returns the output distribution.
  StepOutput<S> step(Bound<S>& P, const EncoderStates<S>& enc, DecoderState<S>& state,
                     std::span<const TokenId> inputs, bool training, Rng* rng) const {
    if (static_cast<Eigen::Index>(inputs.size()) != enc.batch) {
      throw DimensionError("step: " + std::to_string(inputs.size()) + " inputs for batch " + std::to_string(enc.batch));
    }
    check_ids(inputs, "step");
    auto x = embedding(P["embedding"], inputs);
    for (int layer = 0; layer < cfg_.dec_layers; ++layer) {
      if (layer > 0) x = dropout(x, cfg_.dropout, training, rng);
      const std::string pre = "dec.l" + std::to_string(layer);
      auto& ls = state.layers[static_cast<std::size_t>(layer)];
      ls = lstm_cell(x, ls, P[pre + ".W"], P[pre + ".U"], P[pre + ".b"]);
      x = ls.h;
    }
    const Tensor<S> v = x;
    auto [alpha, d] = attention(enc, v, P);
    StepOutput<S> out;
    out.alpha = alpha;
    out.gen = generator_dist(d, v, P);
    if (cfg_.arch == Arch::kPointerGenerator) {
      out.p_gen = copy_gate(d, v, P);
      out.dist = mix_distributions(out.gen, out.p_gen, alpha, enc.source_ids);
    } else {
      out.dist = out.gen;
    }
    return out;
  }

  // Teacher-forced pass: decoder_inputs rows may differ in length; steps past a
  // row's end are fed PAD and must be masked out by the caller's loss.
  std::vector<StepOutput<S>> forward_teacher_forced(Bound<S>& P, const IdBatch& src, const IdBatch& dec_in,
                                                    bool training, Rng* rng) const {
    if (dec_in.batch() != src.batch()) throw DimensionError("forward: source/decoder batch mismatch");
    const std::size_t L = dec_in.max_length();
    if (L == 0) throw DataError("forward: empty decoder input");
    if (static_cast<int>(L) > cfg_.max_len) throw DataError("forward: decoder input exceeds max_len");
    auto enc = encode(P, src, training, rng);
    auto state = initial_state(P, enc);
    std::vector<StepOutput<S>> outs;
    outs.reserve(L);
    std::vector<TokenId> ids(src.batch());
    for (std::size_t n = 0; n < L; ++n) {
      for (std::size_t b = 0; b < src.batch(); ++b) {
        const auto& r = dec_in.rows[b];
        ids[b] = n < r.size() ? r[n] : kPad;
      }
      outs.push_back(step(P, enc, state, std::span<const TokenId>(ids), training, rng));
    }
    return outs;
  }

 private:
  static Tensor<S> zeros(Tape<S>& tape, Eigen::Index r, Eigen::Index c) { return tape.constant(Matrix<S>::Zero(r, c)); }

  static Tensor<S> select(const std::vector<bool>& keep, const Tensor<S>& a, const Tensor<S>& b) {
    for (bool k : keep) {
      if (!k) return where_rows(keep, a, b);
    }
    return a;
  }

  void check_ids(std::span<const TokenId> ids, const char* where) const {
    for (TokenId id : ids) {
      if (id < 0 || id >= cfg_.vocab_size) {
        throw DataError(std::string(where) + ": token id " + std::to_string(id) + " outside vocabulary of " +
                        std::to_string(cfg_.vocab_size));
      }
    }
  }

  ModelConfig cfg_;
  ParameterSet<S>* params_;
};

}  // namespace mapgn

#endif  // MAPGN_MODEL_HPP
