#ifndef MAPGN_RNG_HPP
#define MAPGN_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mapgn {

// Deterministic random stream. Streams are keyed by (seed, key...) so results do
// not depend on how work is split across threads or resumed from a checkpoint.
// The uniform helpers below are written out by hand because the standard
// distributions are implementation-defined.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static Rng keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::vector<std::uint32_t> words;
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (auto k : keys) {
      words.push_back(static_cast<std::uint32_t>(k));
      words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    Rng r;
    r.engine_.seed(seq);
    return r;
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Uniform real in [0, 1) from the top 53 bits of a 64-bit draw.
template <class URBG>
double uniform01(URBG& gen) {
  return static_cast<double>(static_cast<std::uint64_t>(gen()) >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection; n must be positive.
template <class URBG>
std::uint64_t uniform_below(URBG& gen, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = static_cast<std::uint64_t>(gen());
  } while (x >= limit);
  return x % n;
}

template <class URBG>
double uniform_real(URBG& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform01(gen);
}

template <class URBG, class T>
void shuffle(URBG& gen, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_below(gen, i)]);
  }
}

}  // namespace mapgn

#endif  // MAPGN_RNG_HPP
