#ifndef MAPGN_CONFIG_HPP
#define MAPGN_CONFIG_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mapgn/masking.hpp"
#include "mapgn/model.hpp"
#include "mapgn/training.hpp"

namespace mapgn {

enum class Precision { kF32, kF64 };

struct FinetuneOptions {
  // Validation loss is checked every `eval_every` steps (0: once per epoch)
  // and the best parameters are kept.
  std::int64_t eval_every = 0;
  bool select_best = true;
};

struct DecodeOptions {
  std::size_t beam = 1;
  int max_len = 200;
  double max_len_ratio = 0.0;  // 0: no source-relative cap
  bool length_normalize = false;
};

// Output length limit for a source of `source_len` tokens.
inline int effective_max_len(const DecodeOptions& opt, std::size_t source_len) {
  if (opt.max_len_ratio <= 0.0) return opt.max_len;
  const double r = std::ceil(opt.max_len_ratio * static_cast<double>(source_len));
  return r < static_cast<double>(opt.max_len) ? static_cast<int>(r) : opt.max_len;
}

struct PathOptions {
  std::string data_dir = "data";
  std::string work_dir = "runs";
};

struct DataOptions {
  std::size_t max_line_chars = 1000;
  std::size_t min_count = 1;
};

// Everything a run needs besides input files. vocab_size is filled from the
// vocabulary at run time.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  MaskingSpec masking = MaskingSpec::mapgn();
  FinetuneOptions finetune;
  DecodeOptions decode;
  PathOptions paths;
  DataOptions data;
  Precision precision = Precision::kF32;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  // Missing keys take their defaults; unknown keys, type mismatches and
  // invalid values are all reported together in one ConfigError.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);

  // Overrides paths.* from MAPGN_DATA_DIR / MAPGN_WORK_DIR when set.
  void apply_env();
};

struct ConfigKeyDoc {
  std::string key;
  std::string default_value;
  std::string description;
};

// One entry per leaf key, in document order.
const std::vector<ConfigKeyDoc>& config_key_docs();
std::string config_help_text();

MaskingSpec masking_from_json(const nlohmann::json& j);
nlohmann::json masking_to_json(const MaskingSpec& spec);

}  // namespace mapgn

#endif  // MAPGN_CONFIG_HPP
