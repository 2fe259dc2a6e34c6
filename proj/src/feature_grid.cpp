#include "expertad/feature_grid.hpp"

#include <cstring>

namespace expertad {

FeatureGrid::FeatureGrid(std::size_t T, std::size_t C, std::size_t H, std::size_t W, double fill)
    : T_(T), C_(C), H_(H), W_(W), data_(T * C * H * W, fill) {}

std::uint64_t checksum(const std::vector<double>& values) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (double v : values) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

}  // namespace expertad
