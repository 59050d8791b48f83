#include "mapgn/model.hpp"

namespace mapgn {

std::string to_string(Arch a) { return a == Arch::kPointerGenerator ? "pointer-generator" : "encoder-decoder"; }

Arch parse_arch(const std::string& s) {
  if (s == "pointer-generator") return Arch::kPointerGenerator;
  if (s == "encoder-decoder") return Arch::kEncoderDecoder;
  throw ConfigError("unknown arch '" + s + "' (expected pointer-generator|encoder-decoder)");
}

void ModelConfig::validate() const {
  std::string msg;
  auto need = [&](bool ok, const char* what) {
    if (!ok) msg += std::string(msg.empty() ? "" : "; ") + what;
  };
  need(emb_dim > 0, "model.emb_dim must be positive");
  need(enc_layers > 0, "model.enc_layers must be positive");
  need(enc_hidden > 0, "model.enc_hidden must be positive");
  need(dec_layers > 0, "model.dec_layers must be positive");
  need(dec_hidden > 0, "model.dec_hidden must be positive");
  need(vocab_size >= kNumSpecials, "vocab_size must be >= 5");
  need(dropout >= 0.0 && dropout < 1.0, "model.dropout must lie in [0, 1)");
  need(max_len > 0, "model.max_len must be positive");
  if (!msg.empty()) throw ConfigError(msg);
}

nlohmann::json ModelConfig::to_json() const {
  return {{"arch", to_string(arch)},       {"emb_dim", emb_dim},       {"enc_layers", enc_layers},
          {"enc_hidden", enc_hidden},      {"dec_layers", dec_layers}, {"dec_hidden", dec_hidden},
          {"vocab_size", vocab_size},      {"dropout", dropout},       {"max_len", max_len}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.arch = parse_arch(j.at("arch").get<std::string>());
  c.emb_dim = j.at("emb_dim").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.max_len = j.at("max_len").get<int>();
  return c;
}

std::map<std::string, std::pair<int, int>> parameter_shapes(const ModelConfig& cfg) {
  std::map<std::string, std::pair<int, int>> s;
  const int He = cfg.enc_hidden, Hd = cfg.dec_hidden, E = cfg.emb_dim, V = cfg.vocab_size;
  s["embedding"] = {V, E};
  for (int l = 0; l < cfg.enc_layers; ++l) {
    const int in = l == 0 ? E : 2 * He;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string pre = "enc.l" + std::to_string(l) + "." + dir;
      s[pre + ".W"] = {in, 4 * He};
      s[pre + ".U"] = {He, 4 * He};
      s[pre + ".b"] = {1, 4 * He};
    }
  }
  for (int l = 0; l < cfg.dec_layers; ++l) {
    const std::string pre = "dec.l" + std::to_string(l);
    const int in = l == 0 ? E : Hd;
    s[pre + ".W"] = {in, 4 * Hd};
    s[pre + ".U"] = {Hd, 4 * Hd};
    s[pre + ".b"] = {1, 4 * Hd};
    const std::string br = "bridge.l" + std::to_string(l);
    s[br + ".Wh"] = {2 * He, Hd};
    s[br + ".bh"] = {1, Hd};
    s[br + ".Wc"] = {2 * He, Hd};
    s[br + ".bc"] = {1, Hd};
  }
  s["attn.W_h"] = {2 * He, Hd};
  s["attn.W_v"] = {Hd, Hd};
  s["attn.b"] = {1, Hd};
  s["attn.w"] = {Hd, 1};
  s["gen.W1"] = {2 * He + Hd, Hd};
  s["gen.b1"] = {1, Hd};
  s["gen.W2"] = {Hd, V};
  s["gen.b2"] = {1, V};
  if (cfg.arch == Arch::kPointerGenerator) {
    s["copy.W1"] = {2 * He + Hd, Hd};
    s["copy.b1"] = {1, Hd};
    s["copy.W2"] = {Hd, 1};
    s["copy.b2"] = {1, 1};
  }
  return s;
}

}  // namespace mapgn
