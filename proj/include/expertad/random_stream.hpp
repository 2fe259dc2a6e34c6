#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace expertad {

/// Counter-based random stream. Every draw is a pure function of
/// (seed, stream id, counter); the sequential `next_*` helpers only advance
/// a local cursor, so two streams never share state and forks are cheap.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view stream_id);

  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform in [0, 1).
  double uniform(std::uint64_t counter) const;
  /// Standard normal (Box-Muller over two derived words).
  double normal(std::uint64_t counter) const;

  RandomStream fork(std::string_view child) const;
  RandomStream fork(std::uint64_t index) const;

  std::uint64_t next_bits() { return bits(cursor_++); }
  double next_uniform() { return uniform(cursor_++); }
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }
  double next_normal() { return normal(cursor_++); }
  std::size_t next_index(std::size_t n);
  std::vector<std::size_t> permutation(std::size_t n);

  std::uint64_t key() const { return key_; }

 private:
  explicit RandomStream(std::uint64_t key) : key_(key) {}
  std::uint64_t key_;
  std::uint64_t cursor_ = 0;
};

RandomStream seeded_stream(std::uint64_t seed, std::string_view stream_id);

}  // namespace expertad
