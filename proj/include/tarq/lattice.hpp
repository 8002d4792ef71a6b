#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tarq/matrix.hpp"

namespace tarq {

enum class ScaleMode {
  kMinMax,  // s = (max - min) / (2^b - 1), symmetric signed clamp, no zero-point
  kAbsMax,  // s = max|w| / (2^(b-1) - 1)
};

struct QuantConfig {
  int bits = 4;
  std::size_t group_size = 128;
  double scale_floor = 1e-12;
  ScaleMode scale_mode = ScaleMode::kMinMax;

  int code_min() const { return -(1 << (bits - 1)); }
  int code_max() const { return (1 << (bits - 1)) - 1; }
  std::size_t num_groups(std::size_t cols) const {
    return (cols + group_size - 1) / group_size;
  }
  // Throws BadSpec when bits is outside [2, 8] or group_size is zero.
  void validate() const;
};

// Integer codes plus per-(row, group) scales. Codes are stored as int8; the
// dequantized value of (i, j) is scales(i, j / g) * codes[i * cols + j].
struct QuantizedTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  QuantConfig config;
  std::vector<std::int8_t> codes;
  Matrix scales;

  int code(std::size_t i, std::size_t j) const { return codes[i * cols + j]; }
  double scale(std::size_t i, std::size_t j) const {
    return scales(i, j / config.group_size);
  }

  bool operator==(const QuantizedTensor& other) const {
    return rows == other.rows && cols == other.cols && config.bits == other.config.bits &&
           config.group_size == other.config.group_size && codes == other.codes &&
           scales == other.scales;
  }
};

// Scale for one group of values.
double group_scale(std::span<const double> values, const QuantConfig& cfg);

// Per-row, per-group scales (m x ceil(n/g)). When `exclude` is non-empty,
// columns flagged true do not contribute to their group's range.
Matrix group_scales(const Matrix& w, const QuantConfig& cfg,
                    std::span<const std::uint8_t> exclude = {});

// clamp(round(value / scale)) with ties away from zero.
int quantize_value(double value, double scale, const QuantConfig& cfg);

QuantizedTensor quantize_rtn(const Matrix& w, const QuantConfig& cfg);

Matrix dequantize(const QuantizedTensor& q);

// Two codes per byte, row-major; even column in the low nibble. Odd-length
// rows leave the final high nibble zero. Throws BitsUnsupported unless bits == 4.
std::vector<std::uint8_t> pack4(const QuantizedTensor& q);

// Inverse of pack4. Throws LengthMismatch when the byte count is not
// rows * ceil(cols / 2) or the scale matrix has the wrong shape.
QuantizedTensor unpack4(std::span<const std::uint8_t> bytes, std::size_t rows,
                        std::size_t cols, Matrix scales, const QuantConfig& cfg);

// True when every code lies in [code_min, code_max] and every scale is >= floor.
bool in_lattice(const QuantizedTensor& q);

}  // namespace tarq

namespace tarq {

// Columns kept at full precision next to a quantized tensor. `values` is
// rows x columns.size(); column k of `values` replaces column columns[k].
struct FpColumns {
  std::vector<std::size_t> columns;
  Matrix values;

  bool empty() const { return columns.empty(); }
  bool operator==(const FpColumns& other) const = default;
};

// Dequantize and overwrite the kept columns with their exact values.
Matrix dequantize(const QuantizedTensor& q, const FpColumns& kept);

}  // namespace tarq
