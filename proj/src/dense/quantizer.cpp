#include "psearch/dense/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "psearch/errors.hpp"

namespace psearch::dense {

ScalarQuantizer::ScalarQuantizer(std::vector<double> min, std::vector<double> step)
    : min_(std::move(min)), step_(std::move(step)) {
  if (min_.size() != step_.size()) throw ConfigError("quantizer min/step length differ");
  for (double s : step_) {
    if (!(s >= 0.0)) throw ConfigError("quantizer step must be nonnegative");
  }
}

void ScalarQuantizer::encode(std::span<const float> v, std::span<std::uint8_t> code) const {
  if (v.size() != dim()) throw DimensionMismatch(dim(), v.size());
  if (code.size() != dim()) throw DimensionMismatch(dim(), code.size());
  for (std::size_t d = 0; d < v.size(); ++d) {
    if (step_[d] == 0.0) {
      code[d] = 0;
      continue;
    }
    double t = (static_cast<double>(v[d]) - min_[d]) / step_[d];
    t = std::clamp(t, 0.0, static_cast<double>(kLevels));
    code[d] = static_cast<std::uint8_t>(std::lround(t));
  }
}

std::vector<std::uint8_t> ScalarQuantizer::encode(std::span<const float> v) const {
  std::vector<std::uint8_t> code(dim());
  encode(v, code);
  return code;
}

std::vector<double> ScalarQuantizer::dequantize(std::span<const std::uint8_t> code) const {
  if (code.size() != dim()) throw DimensionMismatch(dim(), code.size());
  std::vector<double> out(dim());
  for (std::size_t d = 0; d < dim(); ++d) out[d] = min_[d] + code[d] * step_[d];
  return out;
}

void ScalarQuantizer::decode(std::span<const std::uint8_t> code, std::span<float> out) const {
  if (code.size() != dim()) throw DimensionMismatch(dim(), code.size());
  if (out.size() != dim()) throw DimensionMismatch(dim(), out.size());
  for (std::size_t d = 0; d < dim(); ++d) out[d] = static_cast<float>(min_[d] + code[d] * step_[d]);
}

ScalarQuantizer train_quantizer(std::span<const float> rows, std::size_t dim) {
  if (dim == 0) throw ConfigError("quantizer dimension must be positive");
  if (rows.empty()) throw ConfigError("cannot train a quantizer on an empty sample");
  if (rows.size() % dim != 0) throw DimensionMismatch(dim, rows.size() % dim);
  std::vector<float> lo(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(dim));
  std::vector<float> hi = lo;
  for (std::size_t off = dim; off < rows.size(); off += dim) {
    for (std::size_t d = 0; d < dim; ++d) {
      lo[d] = std::min(lo[d], rows[off + d]);
      hi[d] = std::max(hi[d], rows[off + d]);
    }
  }
  std::vector<double> min(dim), step(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    min[d] = lo[d];
    step[d] = (static_cast<double>(hi[d]) - static_cast<double>(lo[d])) / ScalarQuantizer::kLevels;
  }
  return ScalarQuantizer(std::move(min), std::move(step));
}

}  // namespace psearch::dense
