#include "mapgn/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mapgn/error.hpp"

namespace mapgn {

namespace {

const char* random_source_name(RandomSource s) { return s == RandomSource::kMaskingSpan ? "span" : "vocab"; }

bool same_spec(const MaskingSpec& a, const MaskingSpec& b) {
  return a.p_mask == b.p_mask && a.p_random == b.p_random && a.p_unchanged == b.p_unchanged &&
         a.random_source == b.random_source && a.span_ratio == b.span_ratio;
}

bool type_compatible(const nlohmann::json& def, const nlohmann::json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_number_unsigned()) return v.is_number_unsigned();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number_float()) return v.is_number();
  return false;
}

const char* type_name(const nlohmann::json& def) {
  if (def.is_boolean()) return "a boolean";
  if (def.is_string()) return "a string";
  if (def.is_number_unsigned()) return "a non-negative integer";
  if (def.is_number_integer()) return "an integer";
  return "a number";
}

const nlohmann::json& custom_masking_defaults() {
  static const nlohmann::json j = {{"name", "custom"},       {"p_mask", 0.4},      {"p_random", 0.4},
                                   {"p_unchanged", 0.2},     {"random_source", "span"}, {"span_ratio", 0.5}};
  return j;
}

// Merges `user` into `out` (which holds defaults), recording every problem.
void merge(nlohmann::json& out, const nlohmann::json& user, const std::string& prefix, std::vector<std::string>& errs) {
  if (!user.is_object()) {
    errs.push_back((prefix.empty() ? std::string("config") : prefix) + " must be an object");
    return;
  }
  for (const auto& [k, v] : user.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (!out.contains(k)) {
      errs.push_back("unknown key '" + key + "'");
      continue;
    }
    auto& slot = out[k];
    if (key == "masking") {
      if (v.is_string()) {
        slot = v;
      } else if (v.is_object()) {
        nlohmann::json m = custom_masking_defaults();
        for (const char* req : {"p_mask", "p_random", "p_unchanged"}) {
          if (!v.contains(req)) errs.push_back("masking." + std::string(req) + " is required for a custom spec");
        }
        merge(m, v, key, errs);
        slot = m;
      } else {
        errs.push_back("masking must be a preset name or an object");
      }
      continue;
    }
    if (slot.is_object()) {
      merge(slot, v, key, errs);
    } else if (!type_compatible(slot, v)) {
      errs.push_back(key + " must be " + type_name(slot));
    } else {
      slot = v;
    }
  }
}

template <typename F>
void collect(std::vector<std::string>& errs, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    std::size_t start = 0;
    while (start <= msg.size()) {
      auto end = msg.find("; ", start);
      if (end == std::string::npos) end = msg.size();
      if (end > start) errs.push_back(msg.substr(start, end - start));
      start = end + 2;
    }
  }
}

void flatten(const nlohmann::json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, key, out);
    } else {
      out.emplace_back(key, v.dump());
    }
  }
}

}  // namespace

MaskingSpec masking_from_json(const nlohmann::json& j) {
  if (j.is_string()) return MaskingSpec::preset(j.get<std::string>());
  MaskingSpec s;
  s.name = j.value("name", std::string("custom"));
  s.p_mask = j.at("p_mask").get<double>();
  s.p_random = j.at("p_random").get<double>();
  s.p_unchanged = j.at("p_unchanged").get<double>();
  const auto src = j.value("random_source", std::string("span"));
  if (src == "span") {
    s.random_source = RandomSource::kMaskingSpan;
  } else if (src == "vocab") {
    s.random_source = RandomSource::kAllVocab;
  } else {
    throw ConfigError("masking.random_source must be 'span' or 'vocab'");
  }
  s.span_ratio = j.value("span_ratio", 0.5);
  return s;
}

nlohmann::json masking_to_json(const MaskingSpec& spec) {
  for (const auto& name : MaskingSpec::preset_names()) {
    if (spec.name == name && same_spec(spec, MaskingSpec::preset(name))) return name;
  }
  return {{"name", spec.name},
          {"p_mask", spec.p_mask},
          {"p_random", spec.p_random},
          {"p_unchanged", spec.p_unchanged},
          {"random_source", random_source_name(spec.random_source)},
          {"span_ratio", spec.span_ratio}};
}

nlohmann::json RunConfig::to_json() const {
  auto m = model.to_json();
  m.erase("vocab_size");
  auto t = train.to_json();
  t.erase("seed");
  return {{"model", m},
          {"train", t},
          {"masking", masking_to_json(masking)},
          {"finetune", {{"eval_every", finetune.eval_every}, {"select_best", finetune.select_best}}},
          {"decode", {{"beam", decode.beam}, {"max_len", decode.max_len}, {"max_len_ratio", decode.max_len_ratio}, {"length_normalize", decode.length_normalize}}},
          {"paths", {{"data_dir", paths.data_dir}, {"work_dir", paths.work_dir}}},
          {"data", {{"max_line_chars", data.max_line_chars}, {"min_count", data.min_count}}},
          {"precision", precision == Precision::kF64 ? "f64" : "f32"},
          {"seed", seed}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  std::vector<std::string> errs;
  nlohmann::json merged = RunConfig{}.to_json();
  // Mismatched entries keep their defaults, so value checks below still run.
  merge(merged, j, "", errs);

  RunConfig c;
  auto m = merged["model"];
  try {
    parse_arch(m["arch"].get<std::string>());
  } catch (const ConfigError& e) {
    errs.push_back(e.what());
    m["arch"] = to_string(ModelConfig{}.arch);  // keep checking the other model fields
  }
  collect(errs, [&] {
    m["vocab_size"] = kNumSpecials;  // placeholder until a vocabulary is loaded
    c.model = ModelConfig::from_json(m);
    c.model.validate();
    c.model.vocab_size = 0;
  });
  c.seed = merged["seed"].get<std::uint64_t>();
  collect(errs, [&] {
    auto t = merged["train"];
    t["seed"] = c.seed;
    c.train = TrainConfig::from_json(t);
    c.train.validate();
  });
  collect(errs, [&] {
    c.masking = masking_from_json(merged["masking"]);
    c.masking.validate();
  });
  c.finetune.eval_every = merged["finetune"]["eval_every"].get<std::int64_t>();
  c.finetune.select_best = merged["finetune"]["select_best"].get<bool>();
  if (c.finetune.eval_every < 0) errs.push_back("finetune.eval_every must be >= 0");
  c.decode.beam = merged["decode"]["beam"].get<std::size_t>();
  c.decode.max_len = merged["decode"]["max_len"].get<int>();
  c.decode.max_len_ratio = merged["decode"]["max_len_ratio"].get<double>();
  c.decode.length_normalize = merged["decode"]["length_normalize"].get<bool>();
  if (c.decode.beam < 1) errs.push_back("decode.beam must be >= 1");
  if (c.decode.max_len < 1) errs.push_back("decode.max_len must be >= 1");
  if (!(c.decode.max_len_ratio >= 0.0)) errs.push_back("decode.max_len_ratio must be >= 0");
  c.paths.data_dir = merged["paths"]["data_dir"].get<std::string>();
  c.paths.work_dir = merged["paths"]["work_dir"].get<std::string>();
  c.data.max_line_chars = merged["data"]["max_line_chars"].get<std::size_t>();
  c.data.min_count = merged["data"]["min_count"].get<std::size_t>();
  if (c.data.max_line_chars < 1) errs.push_back("data.max_line_chars must be >= 1");
  if (c.data.min_count < 1) errs.push_back("data.min_count must be >= 1");
  const auto prec = merged["precision"].get<std::string>();
  if (prec == "f32") {
    c.precision = Precision::kF32;
  } else if (prec == "f64") {
    c.precision = Precision::kF64;
  } else {
    errs.push_back("precision must be 'f32' or 'f64'");
  }
  if (!errs.empty()) {
    std::string msg = std::to_string(errs.size()) + " config error(s):";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::apply_env() {
  if (const char* v = std::getenv("MAPGN_DATA_DIR"); v && *v) paths.data_dir = v;
  if (const char* v = std::getenv("MAPGN_WORK_DIR"); v && *v) paths.work_dir = v;
}

const std::vector<ConfigKeyDoc>& config_key_docs() {
  static const std::vector<ConfigKeyDoc> docs = [] {
    const std::map<std::string, std::string> text = {
        {"model.arch", "pointer-generator | encoder-decoder"},
        {"model.emb_dim", "character embedding width"},
        {"model.enc_layers", "stacked bidirectional LSTM encoder layers"},
        {"model.enc_hidden", "encoder LSTM units per direction"},
        {"model.dec_layers", "stacked LSTM decoder layers"},
        {"model.dec_hidden", "decoder LSTM units (also attention and output widths)"},
        {"model.dropout", "dropout rate between recurrent layers"},
        {"model.max_len", "maximum sequence length in characters; longer inputs are truncated"},
        {"train.lr", "Adam learning rate"},
        {"train.beta1", "Adam first-moment decay"},
        {"train.beta2", "Adam second-moment decay"},
        {"train.eps", "Adam denominator epsilon"},
        {"train.label_smoothing", "label smoothing mass spread over non-PAD tokens"},
        {"train.batch_size", "sentences per mini-batch"},
        {"train.epochs", "passes over the data (used when max_steps is 0)"},
        {"train.max_steps", "optimizer steps; 0 means epochs * batches"},
        {"train.grad_clip", "global gradient-norm clip; 0 disables"},
        {"masking", "mass1 | mass2 | mass3 | mapgn, or an object with p_mask, p_random, p_unchanged"},
        {"masking.p_mask", "custom spec: share of span positions replaced by MASK"},
        {"masking.p_random", "custom spec: share replaced by a random token"},
        {"masking.p_unchanged", "custom spec: share left as is"},
        {"masking.random_source", "custom spec: span (draw from the masked span) | vocab (whole vocabulary)"},
        {"masking.span_ratio", "custom spec: span length as a fraction of the sentence"},
        {"masking.name", "custom spec: label stored in checkpoints"},
        {"finetune.eval_every", "validation interval in steps; 0 means once per epoch"},
        {"finetune.select_best", "keep the parameters with the lowest validation loss"},
        {"decode.beam", "beam width; 1 is greedy"},
        {"decode.max_len", "maximum decoded characters"},
        {"decode.max_len_ratio", "if > 0, also cap output at ceil(ratio * source length) characters"},
        {"decode.length_normalize", "rank finished beams by mean instead of total log-probability"},
        {"paths.data_dir", "default data directory (env MAPGN_DATA_DIR)"},
        {"paths.work_dir", "default output directory (env MAPGN_WORK_DIR)"},
        {"data.max_line_chars", "input lines longer than this are rejected"},
        {"data.min_count", "minimum character frequency for the vocabulary"},
        {"precision", "f32 | f64 arithmetic for training and decoding"},
        {"seed", "seed for initialization, shuffling, dropout and masking"},
    };
    std::vector<std::pair<std::string, std::string>> flat;
    flatten(RunConfig{}.to_json(), "", flat);
    for (const auto& [k, v] : custom_masking_defaults().items()) flat.emplace_back("masking." + k, v.dump());
    std::vector<ConfigKeyDoc> out;
    for (const auto& [k, v] : flat) {
      auto it = text.find(k);
      out.push_back({k, v, it == text.end() ? "" : it->second});
    }
    return out;
  }();
  return docs;
}

std::string config_help_text() {
  std::ostringstream os;
  os << "Config keys (JSON, dotted paths; defaults in brackets):\n";
  for (const auto& d : config_key_docs()) os << "  " << d.key << " [" << d.default_value << "]  " << d.description << "\n";
  return os.str();
}

}  // namespace mapgn
