#include "mapgn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mapgn {

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw CheckpointTruncatedError("checkpoint truncated at byte " + std::to_string(bytes_.size()) + " (needed " +
                                     std::to_string(pos_ + n) + ")");
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const RawCheckpoint& ckpt, bool f64) {
  std::string out(kCheckpointMagic, 4);
  put_le<std::uint16_t>(out, kCheckpointVersion);
  const std::string meta = ckpt.metadata.dump();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint32_t>(out, d);
    for (double v : t.values) {
      if (f64) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      } else {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      }
    }
  }
  return out;
}

RawCheckpoint decode_checkpoint(const std::string& bytes) {
  if (std::memcmp(bytes.data(), kCheckpointMagic, std::min<std::size_t>(bytes.size(), 4)) != 0) {
    throw CheckpointFormatError("not a checkpoint: bad magic");
  }
  if (bytes.size() < 4) throw CheckpointTruncatedError("checkpoint truncated inside the magic");
  Reader r(bytes);
  r.take(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version));
  }
  RawCheckpoint ck;
  const auto meta_len = r.get<std::uint32_t>();
  try {
    ck.metadata = nlohmann::json::parse(r.take(meta_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointFormatError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  const std::string dtype = ck.metadata.value("dtype", "f32");
  if (dtype != "f32" && dtype != "f64") throw CheckpointFormatError("unknown dtype '" + dtype + "'");
  const bool f64 = dtype == "f64";
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    RawTensor t;
    t.name = r.take(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.get<std::uint32_t>());
      n *= t.dims.back();
    }
    t.values.resize(n);
    for (auto& v : t.values) {
      v = f64 ? std::bit_cast<double>(r.get<std::uint64_t>()) : static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()));
    }
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointFormatError("trailing bytes after last tensor");
  return ck;
}

void write_checkpoint_file(const std::string& path, const RawCheckpoint& ckpt, bool f64) {
  const std::string bytes = encode_checkpoint(ckpt, f64);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing checkpoint " + path);
}

RawCheckpoint read_checkpoint_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

void check_vocab_hash(const nlohmann::json& metadata, const std::string& vocab_sha256) {
  const std::string stored = metadata.value("vocab_sha256", "");
  if (stored != vocab_sha256) {
    throw VocabMismatchError("checkpoint vocabulary hash " + stored + " does not match " + vocab_sha256);
  }
}

}  // namespace mapgn
