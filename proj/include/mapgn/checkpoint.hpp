#ifndef MAPGN_CHECKPOINT_HPP
#define MAPGN_CHECKPOINT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "mapgn/training.hpp"

namespace mapgn {

// Checkpoint layout (all integers little-endian):
//   "MPGN" | u16 version | u32 metadata length | metadata (UTF-8 JSON)
//   | u32 tensor count | per tensor: u32 name length, name (UTF-8),
//   u32 rank, u32 dims[rank], values.
// Values are 32-bit floats unless metadata "dtype" is "f64".
inline constexpr char kCheckpointMagic[4] = {'M', 'P', 'G', 'N'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct RawTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;
};

struct RawCheckpoint {
  nlohmann::json metadata;
  std::vector<RawTensor> tensors;
};

void write_checkpoint_file(const std::string& path, const RawCheckpoint& ckpt, bool f64);
RawCheckpoint read_checkpoint_file(const std::string& path);
std::string encode_checkpoint(const RawCheckpoint& ckpt, bool f64);
RawCheckpoint decode_checkpoint(const std::string& bytes);

template <typename S>
struct Checkpoint {
  ParameterSet<S> params;
  std::optional<AdamState<S>> optimizer;
  nlohmann::json metadata;
};

inline constexpr const char* kAdamMomentPrefix = "adam.m/";
inline constexpr const char* kAdamVelocityPrefix = "adam.v/";

namespace detail {
template <typename S>
RawTensor to_raw(const std::string& name, const Matrix<S>& m) {
  RawTensor t;
  t.name = name;
  t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.values.assign(m.data(), m.data() + m.size());
  return t;
}

template <typename S>
Matrix<S> from_raw(const RawTensor& t) {
  if (t.dims.size() != 2) throw CheckpointFormatError("tensor '" + t.name + "' must have rank 2");
  Matrix<S> m(t.dims[0], t.dims[1]);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(t.values[static_cast<std::size_t>(i)]);
  return m;
}
}  // namespace detail

// `metadata` should carry config, arch, vocab SHA-256 and masking name; the
// writer adds "dtype" and the optimizer step.
template <typename S>
void save_checkpoint(const std::string& path, const ParameterSet<S>& params, const AdamState<S>* optimizer,
                     nlohmann::json metadata) {
  constexpr bool f64 = std::is_same_v<S, double>;
  RawCheckpoint raw;
  metadata["dtype"] = f64 ? "f64" : "f32";
  metadata["optimizer_step"] = optimizer ? optimizer->step : 0;
  metadata["has_optimizer"] = optimizer != nullptr;
  raw.metadata = std::move(metadata);
  for (const auto& [name, p] : params) raw.tensors.push_back(detail::to_raw(name, p.value));
  if (optimizer) {
    for (const auto& [name, m] : optimizer->m) raw.tensors.push_back(detail::to_raw(kAdamMomentPrefix + name, m));
    for (const auto& [name, v] : optimizer->v) raw.tensors.push_back(detail::to_raw(kAdamVelocityPrefix + name, v));
  }
  write_checkpoint_file(path, raw, f64);
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
  RawCheckpoint raw = read_checkpoint_file(path);
  Checkpoint<S> ck;
  ck.metadata = raw.metadata;
  const bool has_opt = raw.metadata.value("has_optimizer", false);
  AdamState<S> opt;
  for (const auto& t : raw.tensors) {
    if (t.name.starts_with(kAdamMomentPrefix)) {
      opt.m[t.name.substr(std::char_traits<char>::length(kAdamMomentPrefix))] = detail::from_raw<S>(t);
    } else if (t.name.starts_with(kAdamVelocityPrefix)) {
      opt.v[t.name.substr(std::char_traits<char>::length(kAdamVelocityPrefix))] = detail::from_raw<S>(t);
    } else {
      Parameter<S> p;
      p.value = detail::from_raw<S>(t);
      p.zero_grad();
      ck.params.emplace(t.name, std::move(p));
    }
  }
  if (has_opt) {
    opt.step = raw.metadata.value("optimizer_step", std::int64_t{0});
    ck.optimizer = std::move(opt);
  }
  return ck;
}

// Refuses a checkpoint built against a different vocabulary.
void check_vocab_hash(const nlohmann::json& metadata, const std::string& vocab_sha256);

}  // namespace mapgn

#endif  // MAPGN_CHECKPOINT_HPP
