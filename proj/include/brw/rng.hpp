#pragma once

// Counter-based random number streams (Philox4x32-10, Salmon et al. 2011).
//
// A stream is keyed by (root_seed, stream_id); distinct stream ids give
// statistically independent sequences without any shared state, so replica r
// always sees the same draws no matter how replicas are scheduled across
// workers. That property is what makes every experiment bit-reproducible.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace brw {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
  std::uint64_t prod = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(prod >> 32);
  lo = static_cast<std::uint32_t>(prod);
}

}  // namespace detail

class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  Philox4x32(std::uint64_t key_lo, std::uint64_t key_hi)
      : key0_(static_cast<std::uint32_t>(key_lo)),
        key1_(static_cast<std::uint32_t>(key_lo >> 32)),
        key2_(static_cast<std::uint32_t>(key_hi)) {}

  // 10-round keyed bijection of the 128-bit counter.
  Block operator()(std::uint64_t counter) const {
    Block c{static_cast<std::uint32_t>(counter),
            static_cast<std::uint32_t>(counter >> 32), key2_, 0x243F6A88u};
    std::uint32_t k0 = key0_, k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      std::uint32_t hi0, lo0, hi1, lo1;
      detail::mulhilo32(0xD2511F53u, c[0], hi0, lo0);
      detail::mulhilo32(0xCD9E8D57u, c[2], hi1, lo1);
      c = Block{hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    return c;
  }

 private:
  std::uint32_t key0_, key1_, key2_;
};

// One reproducible stream of doubles/integers, addressed by (seed, stream id).
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}

  RngStream(std::uint64_t root_seed, std::uint64_t stream_id)
      : engine_(make_key(root_seed, stream_id, 0),
                make_key(root_seed, stream_id, 1)),
        root_seed_(root_seed),
        stream_id_(stream_id) {}

  std::uint64_t root_seed() const { return root_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // A child stream with its own key; used for lazily materialized subtrees so
  // that evaluating one subtree never perturbs draws of another.
  RngStream substream(std::uint64_t child_id) const {
    std::uint64_t s = root_seed_ ^ (0x6C62272E07BB0142ULL + child_id);
    std::uint64_t mixed = detail::splitmix64(s) ^ stream_id_;
    RngStream child;
    child.engine_ = Philox4x32(make_key(mixed, stream_id_, 2),
                               make_key(mixed, child_id, 3));
    child.root_seed_ = root_seed_;
    child.stream_id_ = stream_id_;
    return child;
  }

  std::uint32_t next_u32() {
    if (buffer_pos_ == 4) refill();
    return buffer_[buffer_pos_++];
  }

  std::uint64_t next_u64() {
    std::uint64_t lo = next_u32();
    std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; the paired draw is cached.
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform_pos();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double gaussian(double mean, double stddev) {
    return mean + stddev * gaussian();
  }

  double exponential(double rate = 1.0) {
    return -std::log(uniform_pos()) / rate;
  }

  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free would bias for huge n; n here is always small.
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) %
           (n == 0 ? 1 : n);
  }

 private:
  static std::uint64_t make_key(std::uint64_t seed, std::uint64_t stream,
                                std::uint64_t salt) {
    std::uint64_t s = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    std::uint64_t a = detail::splitmix64(s);
    s ^= stream * 0xD1B54A32D192ED03ULL + salt;
    std::uint64_t b = detail::splitmix64(s);
    return a ^ (b + 0x2545F4914F6CDD1DULL);
  }

  void refill() {
    buffer_ = engine_(counter_++);
    buffer_pos_ = 0;
  }

  Philox4x32 engine_;
  std::uint64_t counter_ = 0;
  Philox4x32::Block buffer_{};
  int buffer_pos_ = 4;
  std::uint64_t root_seed_ = 0, stream_id_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace brw
