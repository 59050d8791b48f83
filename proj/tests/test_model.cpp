#include <cmath>

#include "doctest.h"
#include "mapgn/error.hpp"
#include "mapgn/grad_check.hpp"
#include "mapgn/model.hpp"
#include "mapgn/training.hpp"

using namespace mapgn;

namespace {

ModelConfig small_config(Arch arch, int V = 12) {
  ModelConfig c;
  c.arch = arch;
  c.emb_dim = 6;
  c.enc_layers = 2;
  c.enc_hidden = 5;
  c.dec_layers = 2;
  c.dec_hidden = 7;
  c.vocab_size = V;
  c.dropout = 0.0;
  c.max_len = 50;
  return c;
}

template <typename S>
ParameterSet<S> head_params(int in, int hidden, int V) {
  ParameterSet<S> p;
  auto add = [&](const std::string& n, int r, int c) {
    Parameter<S> x;
    x.value.setZero(r, c);
    p.emplace(n, std::move(x));
  };
  add("gen.W1", in, hidden);
  add("gen.b1", 1, hidden);
  add("gen.W2", hidden, V);
  add("gen.b2", 1, V);
  add("copy.W1", in, hidden);
  add("copy.b1", 1, hidden);
  add("copy.W2", hidden, 1);
  add("copy.b2", 1, 1);
  return p;
}

Matrix<double> randmat(Eigen::Index r, Eigen::Index c, Rng& rng, double lo = -1, double hi = 1) {
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform_real(rng, lo, hi);
  return m;
}

}  // namespace

TEST_CASE("parameter sets: pointer-generator adds only the copy head") {
  auto ed = parameter_shapes(small_config(Arch::kEncoderDecoder));
  auto pg = parameter_shapes(small_config(Arch::kPointerGenerator));
  for (const auto& [name, shape] : ed) {
    REQUIRE(pg.count(name) == 1);
    CHECK(pg.at(name) == shape);
  }
  std::size_t extra = 0;
  for (const auto& [name, shape] : pg) {
    if (!ed.count(name)) {
      CHECK(name.rfind("copy.", 0) == 0);
      ++extra;
    }
  }
  CHECK(extra == 4);
}

TEST_CASE("model config validation lists every problem") {
  ModelConfig c;
  c.emb_dim = 0;
  c.vocab_size = 3;
  try {
    c.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("emb_dim") != std::string::npos);
    CHECK(msg.find("vocab_size") != std::string::npos);
  }
}

TEST_CASE("encode: shapes and zero parameters") {
  auto cfg = small_config(Arch::kPointerGenerator);
  cfg.enc_hidden = 8;
  auto params = make_parameters<double>(cfg, 1);
  Seq2Seq<double> model(cfg, params);
  Tape<double> tape;
  Bound<double> P(tape, params);
  auto enc = model.encode(P, IdBatch{{{5, 6, 7}}}, false, nullptr);
  CHECK(enc.H.rows() == 3);
  CHECK(enc.H.cols() == 16);

  auto zp = zero_parameters<double>(cfg);
  Seq2Seq<double> zm(cfg, zp);
  Tape<double> t2;
  Bound<double> Z(t2, zp);
  auto ze = zm.encode(Z, IdBatch{{{5, 6, 7, 8}}}, false, nullptr);
  CHECK(ze.H.value().isZero(0.0));
}

TEST_CASE("encode: full-size dimensions") {
  ModelConfig cfg;  // 512 emb, 4x256 encoder
  cfg.vocab_size = 20;
  auto params = make_parameters<float>(cfg, 1);
  Seq2Seq<float> model(cfg, params);
  Tape<float> tape;
  tape.set_grad_enabled(false);
  Bound<float> P(tape, params);
  auto enc = model.encode(P, IdBatch{{{5, 6, 7, 8, 9}}}, false, nullptr);
  CHECK(enc.H.rows() == 5);
  CHECK(enc.H.cols() == 512);
}

TEST_CASE("encode errors") {
  auto cfg = small_config(Arch::kPointerGenerator);
  auto params = make_parameters<double>(cfg, 1);
  Seq2Seq<double> model(cfg, params);
  Tape<double> tape;
  Bound<double> P(tape, params);
  CHECK_THROWS_AS(model.encode(P, IdBatch{{{}}}, false, nullptr), DataError);
  CHECK_THROWS_AS(model.encode(P, IdBatch{{{5, 12}}}, false, nullptr), DataError);
  CHECK_THROWS_AS(model.encode(P, IdBatch{{{-1}}}, false, nullptr), DataError);
}

TEST_CASE("attention examples") {
  Rng rng(3);
  ParameterSet<double> params;
  auto add = [&](const std::string& n, Matrix<double> v) {
    Parameter<double> p;
    p.value = std::move(v);
    params.emplace(n, std::move(p));
  };
  add("attn.W_v", Matrix<double>::Zero(1, 1));
  add("attn.b", Matrix<double>::Zero(1, 1));
  add("attn.w", Matrix<double>::Constant(1, 1, std::log(3.0) / std::tanh(1.0)));
  Tape<double> tape;
  Bound<double> P(tape, params);

  auto make_enc = [&](const Matrix<double>& H, const Matrix<double>& keys) {
    EncoderStates<double> enc;
    enc.H = tape.constant(H);
    enc.keys = tape.constant(keys);
    enc.length = H.rows();
    enc.batch = 1;
    enc.mask = Matrix<double>::Ones(1, H.rows());
    return enc;
  };
  auto v = tape.constant(Matrix<double>::Constant(1, 1, 0.3));

  SUBCASE("M=1 gives alpha 1 and the single state") {
    Matrix<double> H = randmat(1, 4, rng);
    auto [alpha, d] = attention(make_enc(H, Matrix<double>::Constant(1, 1, 0.7)), v, P);
    CHECK(alpha.value()(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK((d.value() - H).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("scores (0, ln 3) give alpha (0.25, 0.75)") {
    Matrix<double> H = randmat(2, 4, rng);
    Matrix<double> keys(2, 1);
    keys << 0.0, 1.0;
    auto [alpha, d] = attention(make_enc(H, keys), v, P);
    CHECK(alpha.value()(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(alpha.value()(0, 1) == doctest::Approx(0.75).epsilon(1e-12));
    Matrix<double> expected = 0.25 * H.row(0) + 0.75 * H.row(1);
    CHECK((d.value() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("w = 0 gives uniform weights and the mean state") {
    params.at("attn.w").value.setZero();
    Tape<double> t2;
    Bound<double> P2(t2, params);
    Matrix<double> H = randmat(5, 3, rng);
    EncoderStates<double> enc;
    enc.H = t2.constant(H);
    enc.keys = t2.constant(randmat(5, 1, rng));
    enc.length = 5;
    enc.batch = 1;
    enc.mask = Matrix<double>::Ones(1, 5);
    auto [alpha, d] = attention(enc, t2.constant(Matrix<double>::Constant(1, 1, 0.3)), P2);
    for (int m = 0; m < 5; ++m) CHECK(alpha.value()(0, m) == doctest::Approx(0.2).epsilon(1e-14));
    Matrix<double> mean = H.colwise().mean();
    CHECK((d.value() - mean).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("decoder batch mismatch") {
    Matrix<double> H = randmat(2, 4, rng);
    Matrix<double> keys(2, 1);
    keys << 0.0, 1.0;
    auto v2 = tape.constant(Matrix<double>::Zero(2, 1));
    CHECK_THROWS_AS(attention(make_enc(H, keys), v2, P), DimensionError);
  }
}

TEST_CASE("generator and copy gate examples") {
  auto params = head_params<double>(5, 4, 3);
  Rng rng(4);
  Tape<double> tape;
  Bound<double> P(tape, params);
  auto d = tape.constant(randmat(1, 3, rng));
  auto v = tape.constant(randmat(1, 2, rng));

  auto G = generator_dist(d, v, P);
  for (int t = 0; t < 3; ++t) CHECK(G.value()(0, t) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(copy_gate(d, v, P).item() == 0.5);

  params.at("gen.b2").value << 0.0, 0.0, std::log(2.0);
  params.at("copy.b2").value(0, 0) = std::log(3.0);
  Tape<double> t2;
  Bound<double> P2(t2, params);
  auto d2 = t2.constant(d.value());
  auto v2 = t2.constant(v.value());
  auto G2 = generator_dist(d2, v2, P2);
  CHECK(G2.value()(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(G2.value()(0, 1) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(G2.value()(0, 2) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(copy_gate(d2, v2, P2).item() == doctest::Approx(0.75).epsilon(1e-14));

  // Monotone approach to 1 as the gate pre-activation grows.
  double prev = 0.0;
  for (double z : {0.0, 1.0, 5.0, 20.0, 50.0}) {
    params.at("copy.b2").value(0, 0) = z;
    Tape<double> t3;
    Bound<double> P3(t3, params);
    const double g = copy_gate(t3.constant(d.value()), t3.constant(v.value()), P3).item();
    CHECK(g >= prev);
    prev = g;
  }
  CHECK(prev == doctest::Approx(1.0).epsilon(1e-15));

  auto bad = t2.constant(Matrix<double>::Zero(1, 4));
  CHECK_THROWS_AS(generator_dist(d2, bad, P2), DimensionError);
}

TEST_CASE("mix_distributions examples") {
  Tape<double> tape;
  Matrix<double> g(1, 3);
  g << 0.5, 0.5, 0.0;
  Matrix<double> a(1, 2);
  a << 0.25, 0.75;
  auto out = mix_distributions(tape.constant(g), tape.constant(Matrix<double>::Constant(1, 1, 0.5)),
                               tape.constant(a), {{0, 1}});
  CHECK(out.value()(0, 0) == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(out.value()(0, 1) == doctest::Approx(0.625).epsilon(1e-15));
  CHECK(out.value()(0, 2) == 0.0);
  CHECK(out.value().sum() == doctest::Approx(1.0).epsilon(1e-15));

  auto pure_gen = mix_distributions(tape.constant(g), tape.constant(Matrix<double>::Ones(1, 1)), tape.constant(a),
                                    {{0, 1}});
  CHECK(pure_gen.value() == g);

  Matrix<double> g8 = Matrix<double>::Constant(1, 8, 1.0 / 8);
  auto pure_copy = mix_distributions(tape.constant(g8), tape.constant(Matrix<double>::Zero(1, 1)),
                                     tape.constant(Matrix<double>::Ones(1, 1)), {{7}});
  for (int t = 0; t < 8; ++t) CHECK(pure_copy.value()(0, t) == (t == 7 ? 1.0 : 0.0));

  // Repeated source tokens accumulate their attention.
  Matrix<double> a3(1, 3);
  a3 << 0.2, 0.3, 0.5;
  auto rep = mix_distributions(tape.constant(g), tape.constant(Matrix<double>::Zero(1, 1)), tape.constant(a3),
                               {{1, 2, 1}});
  CHECK(rep.value()(0, 1) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(rep.value()(0, 2) == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("teacher-forced output shape") {
  auto cfg = small_config(Arch::kPointerGenerator);
  auto params = make_parameters<float>(cfg, 2);
  Seq2Seq<float> model(cfg, params);
  Tape<float> tape;
  Bound<float> P(tape, params);
  auto outs = model.forward_teacher_forced(P, IdBatch{{{5, 6, 7}, {8, 9}}}, IdBatch{{{kBos, 5, 6, 7}, {kBos, 8}}},
                                           false, nullptr);
  CHECK(outs.size() == 4);
  for (const auto& o : outs) {
    CHECK(o.dist.rows() == 2);
    CHECK(o.dist.cols() == 12);
  }
}

TEST_CASE("encoder-decoder equals pointer-generator with the gate pinned to 1") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto pg_cfg = small_config(Arch::kPointerGenerator);
    auto ed_cfg = small_config(Arch::kEncoderDecoder);
    auto pg = make_parameters<double>(pg_cfg, seed);
    pg.at("copy.b2").value(0, 0) = 1000.0;  // sigmoid saturates to exactly 1
    auto ed = transfer_params(pg, ed_cfg, seed).params;
    Seq2Seq<double> mp(pg_cfg, pg), me(ed_cfg, ed);
    Tape<double> tp, te;
    Bound<double> Pp(tp, pg), Pe(te, ed);
    IdBatch src{{{5, 6, 7, 5}, {9, 10}}}, dec{{{kBos, 6, 7}, {kBos, 11, 9}}};
    auto op = mp.forward_teacher_forced(Pp, src, dec, false, nullptr);
    auto oe = me.forward_teacher_forced(Pe, src, dec, false, nullptr);
    REQUIRE(op.size() == oe.size());
    for (std::size_t n = 0; n < op.size(); ++n) {
      CHECK(op[n].p_gen.value().isOnes(0.0));
      CHECK(op[n].dist.value() == oe[n].dist.value());
    }
  }
}

TEST_CASE("mixture normalization and copy support over 1000 random draws") {
  auto cfg = small_config(Arch::kPointerGenerator, 15);
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  double worst = 0.0;
  bool nonneg = true, support_exact = true;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    auto params = make_parameters<float>(cfg, 1000 + k);
    Rng rng = Rng::keyed(77, {k});
    // Scale weights up so gates and attention move well away from uniform.
    const float scale = static_cast<float>(uniform_real(rng, 1.0, 30.0));
    for (auto& [name, p] : params) p.value *= scale;
    std::vector<TokenId> source;
    const auto M = 1 + uniform_below(rng, 6);
    for (std::size_t m = 0; m < M; ++m) source.push_back(static_cast<TokenId>(5 + uniform_below(rng, 10)));
    Seq2Seq<float> model(cfg, params);
    Tape<float> tape;
    tape.set_grad_enabled(false);
    Bound<float> P(tape, params);
    auto enc = model.encode(P, IdBatch{{source}}, false, nullptr);
    auto state = model.initial_state(P, enc);
    const TokenId in = static_cast<TokenId>(uniform_below(rng, 15));
    auto out = model.step(P, enc, state, std::span<const TokenId>(&in, 1), false, nullptr);
    const auto& dist = out.dist.value();
    worst = std::max(worst, std::abs(static_cast<double>(dist.sum()) - 1.0));
    nonneg = nonneg && dist.minCoeff() >= 0.0f;
    const float pg = out.p_gen.item();
    for (TokenId t = 0; t < 15; ++t) {
      if (std::find(source.begin(), source.end(), t) == source.end()) {
        support_exact = support_exact && dist(0, t) == pg * out.gen.value()(0, t);
      }
    }
  }
  CHECK(worst < 1e-5);
  CHECK(nonneg);
  CHECK(support_exact);
}

TEST_CASE("transfer between architectures preserves encode bit-exactly") {
  auto pg_cfg = small_config(Arch::kPointerGenerator);
  auto ed_cfg = small_config(Arch::kEncoderDecoder);
  auto pg = make_parameters<double>(pg_cfg, 9);
  auto res = transfer_params(pg, ed_cfg, 10);
  CHECK(res.initialized.empty());
  auto ed = res.params;
  Seq2Seq<double> mp(pg_cfg, pg), me(ed_cfg, ed);
  Tape<double> tp, te;
  Bound<double> Pp(tp, pg), Pe(te, ed);
  IdBatch src{{{5, 6, 7, 8, 9, 10}}};
  CHECK(mp.encode(Pp, src, false, nullptr).H.value() == me.encode(Pe, src, false, nullptr).H.value());

  auto back = transfer_params(ed, pg_cfg, 11);
  CHECK(back.initialized.size() == 4);
  Seq2Seq<double> mb(pg_cfg, back.params);
  Tape<double> tb;
  Bound<double> Pb(tb, back.params);
  CHECK(mb.encode(Pb, src, false, nullptr).H.value() == mp.encode(Pp, src, false, nullptr).H.value());
}

TEST_CASE("full-model gradient check on the toy configuration") {
  ModelConfig cfg;
  cfg.arch = Arch::kPointerGenerator;
  cfg.vocab_size = 7;
  cfg.emb_dim = cfg.enc_hidden = cfg.dec_hidden = 4;
  cfg.enc_layers = cfg.dec_layers = 2;
  cfg.dropout = 0.0;
  auto params = make_parameters<double>(cfg, 5);
  Seq2Seq<double> model(cfg, params);
  SeqPair ex{{5, 6, 5}, {kBos, 6}, {6, kEos}};
  std::vector<const SeqPair*> batch{&ex};
  auto report = grad_check_params(
      params,
      [&](Tape<double>& tape) {
        Bound<double> P(tape, params);
        return sequence_loss(model, P, batch, {0.1, false}, nullptr);
      },
      1e-6);
  CAPTURE(report.worst_param);
  CHECK(report.max_error < 1e-6);
  CHECK(report.per_param.size() == parameter_shapes(cfg).size());
}
