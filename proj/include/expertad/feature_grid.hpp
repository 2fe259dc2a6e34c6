#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "expertad/tensor.hpp"

namespace expertad {

/// BEV-style feature volume T x C x H x W (T = 1 when there is no time
/// axis). Storage is channels-last, [t][h][w][c], so the (T*H*W) x C token
/// matrix is a view.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(std::size_t T, std::size_t C, std::size_t H, std::size_t W, double fill = 0.0);

  std::size_t time() const { return T_; }
  std::size_t channels() const { return C_; }
  std::size_t height() const { return H_; }
  std::size_t width() const { return W_; }
  std::size_t positions() const { return H_ * W_; }
  std::size_t tokens() const { return T_ * H_ * W_; }
  std::size_t size() const { return data_.size(); }

  double& at(std::size_t t, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((t * H_ + h) * W_ + w) * C_ + c];
  }
  double at(std::size_t t, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((t * H_ + h) * W_ + w) * C_ + c];
  }

  MatMap token_matrix() { return MatMap(data_.data(), tokens(), C_); }
  ConstMatMap token_matrix() const { return ConstMatMap(data_.data(), tokens(), C_); }
  /// Tokens of a single frame, (H*W) x C.
  ConstMatMap frame_matrix(std::size_t t) const {
    return ConstMatMap(data_.data() + t * positions() * C_, positions(), C_);
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const FeatureGrid& o) const {
    return T_ == o.T_ && C_ == o.C_ && H_ == o.H_ && W_ == o.W_;
  }
  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;

 private:
  std::size_t T_ = 0, C_ = 0, H_ = 0, W_ = 0;
  std::vector<double> data_;
};

/// FNV-1a over the raw bytes; used for reproducibility spot checks.
std::uint64_t checksum(const std::vector<double>& values);

}  // namespace expertad
