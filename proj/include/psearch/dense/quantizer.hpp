#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace psearch::dense {

/// 8-bit per-dimension scalar quantizer.
///
///   code[d]  = round(clamp((v[d] - min[d]) / step[d], 0, 255))
///   recon[d] = min[d] + code[d] * step[d]
///
/// with step[d] = (max[d] - min[d]) / 255 over the training sample.
/// Reconstruction is plain (no half-step offset), so an in-range value is
/// reproduced within step[d] / 2. Constant dimensions have step 0 and
/// always encode to 0. Parameters are kept in double precision.
class ScalarQuantizer {
 public:
  static constexpr int kLevels = 255;

  ScalarQuantizer() = default;
  ScalarQuantizer(std::vector<double> min, std::vector<double> step);

  std::size_t dim() const noexcept { return min_.size(); }
  const std::vector<double>& min() const noexcept { return min_; }
  const std::vector<double>& step() const noexcept { return step_; }

  void encode(std::span<const float> v, std::span<std::uint8_t> code) const;
  std::vector<std::uint8_t> encode(std::span<const float> v) const;

  /// Double-precision reconstruction.
  std::vector<double> dequantize(std::span<const std::uint8_t> code) const;
  /// Single-precision reconstruction used for scoring.
  void decode(std::span<const std::uint8_t> code, std::span<float> out) const;

  friend bool operator==(const ScalarQuantizer&, const ScalarQuantizer&) = default;

 private:
  std::vector<double> min_;
  std::vector<double> step_;
};

/// Per-dimension extrema of `count` row-major vectors of width `dim`.
/// Throws ConfigError on an empty sample.
ScalarQuantizer train_quantizer(std::span<const float> rows, std::size_t dim);

}  // namespace psearch::dense
