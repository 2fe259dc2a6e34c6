#include "expertad/random_stream.hpp"

#include <cmath>
#include <numbers>

namespace expertad {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed, std::string_view stream_id)
    : key_(mix64(mix64(seed + kGolden) ^ fnv1a(stream_id))) {}

std::uint64_t RandomStream::bits(std::uint64_t counter) const {
  // Two rounds keep neighbouring (key, counter) pairs decorrelated.
  return mix64(mix64(key_ + counter * kGolden) ^ key_);
}

double RandomStream::uniform(std::uint64_t counter) const {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

double RandomStream::normal(std::uint64_t counter) const {
  const std::uint64_t base = mix64(key_ ^ (counter * kGolden + 0x632BE59BD9B4E019ULL));
  const double u1 = (static_cast<double>(mix64(base) >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(mix64(base + kGolden) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomStream RandomStream::fork(std::string_view child) const {
  return RandomStream(mix64(key_ ^ mix64(fnv1a(child))));
}

RandomStream RandomStream::fork(std::uint64_t index) const {
  return RandomStream(mix64(key_ + mix64(index + 0xD1B54A32D192ED03ULL)));
}

std::size_t RandomStream::next_index(std::size_t n) {
  // Lemire-free modulo; bias is < 2^-50 for the sizes used here.
  return static_cast<std::size_t>(next_bits() % n);
}

std::vector<std::size_t> RandomStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[next_index(i)]);
  return p;
}

RandomStream seeded_stream(std::uint64_t seed, std::string_view stream_id) {
  return RandomStream(seed, stream_id);
}

}  // namespace expertad
