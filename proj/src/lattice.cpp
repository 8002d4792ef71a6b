#include "tarq/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace tarq {

void QuantConfig::validate() const {
  if (bits < 2 || bits > 8) {
    throw Error(ErrorCode::kBadSpec, "bits must lie in [2, 8], got " + std::to_string(bits));
  }
  if (group_size == 0) throw Error(ErrorCode::kBadSpec, "group_size must be positive");
  if (!(scale_floor > 0.0)) throw Error(ErrorCode::kBadSpec, "scale_floor must be positive");
}

double group_scale(std::span<const double> values, const QuantConfig& cfg) {
  if (values.empty()) return cfg.scale_floor;
  double s = 0.0;
  if (cfg.scale_mode == ScaleMode::kMinMax) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    s = (*hi - *lo) / static_cast<double>((1 << cfg.bits) - 1);
  } else {
    double amax = 0.0;
    for (double v : values) amax = std::max(amax, std::abs(v));
    s = amax / static_cast<double>(cfg.code_max());
  }
  return s < cfg.scale_floor ? cfg.scale_floor : s;
}

Matrix group_scales(const Matrix& w, const QuantConfig& cfg, std::span<const std::uint8_t> exclude) {
  cfg.validate();
  require_dims(exclude.empty() || exclude.size() == w.cols(), "exclude mask length");
  const std::size_t groups = cfg.num_groups(w.cols());
  Matrix scales(w.rows(), groups);
  std::vector<double> buf;
  buf.reserve(cfg.group_size);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    auto row = w.row(i);
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t begin = g * cfg.group_size;
      const std::size_t end = std::min(begin + cfg.group_size, w.cols());
      buf.clear();
      for (std::size_t j = begin; j < end; ++j) {
        if (exclude.empty() || !exclude[j]) buf.push_back(row[j]);
      }
      scales(i, g) = group_scale(buf, cfg);
    }
  }
  return scales;
}

int quantize_value(double value, double scale, const QuantConfig& cfg) {
  const double r = std::round(value / scale);
  const double lo = cfg.code_min();
  const double hi = cfg.code_max();
  if (!(r >= lo)) return cfg.code_min();
  if (r > hi) return cfg.code_max();
  return static_cast<int>(r);
}

QuantizedTensor quantize_rtn(const Matrix& w, const QuantConfig& cfg) {
  QuantizedTensor q;
  q.rows = w.rows();
  q.cols = w.cols();
  q.config = cfg;
  q.scales = group_scales(w, cfg);
  q.codes.resize(w.size());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      q.codes[i * q.cols + j] =
          static_cast<std::int8_t>(quantize_value(w(i, j), q.scale(i, j), cfg));
    }
  }
  return q;
}

Matrix dequantize(const QuantizedTensor& q) {
  Matrix w(q.rows, q.cols);
  for (std::size_t i = 0; i < q.rows; ++i) {
    for (std::size_t j = 0; j < q.cols; ++j) {
      w(i, j) = q.scale(i, j) * static_cast<double>(q.code(i, j));
    }
  }
  return w;
}

std::vector<std::uint8_t> pack4(const QuantizedTensor& q) {
  if (q.config.bits != 4) {
    throw Error(ErrorCode::kBitsUnsupported,
                "pack4 needs 4-bit codes, got " + std::to_string(q.config.bits));
  }
  const std::size_t row_bytes = (q.cols + 1) / 2;
  std::vector<std::uint8_t> out(q.rows * row_bytes, 0);
  for (std::size_t i = 0; i < q.rows; ++i) {
    for (std::size_t j = 0; j < q.cols; ++j) {
      const auto nibble = static_cast<std::uint8_t>(q.code(i, j) & 0x0F);
      out[i * row_bytes + j / 2] |= (j % 2 == 0) ? nibble : static_cast<std::uint8_t>(nibble << 4);
    }
  }
  return out;
}

QuantizedTensor unpack4(std::span<const std::uint8_t> bytes, std::size_t rows, std::size_t cols,
                        Matrix scales, const QuantConfig& cfg) {
  if (cfg.bits != 4) {
    throw Error(ErrorCode::kBitsUnsupported,
                "unpack4 needs 4-bit codes, got " + std::to_string(cfg.bits));
  }
  const std::size_t row_bytes = (cols + 1) / 2;
  if (bytes.size() != rows * row_bytes) {
    throw Error(ErrorCode::kLengthMismatch, "expected " + std::to_string(rows * row_bytes) +
                                                " packed bytes, got " +
                                                std::to_string(bytes.size()));
  }
  if (scales.rows() != rows || scales.cols() != cfg.num_groups(cols)) {
    throw Error(ErrorCode::kLengthMismatch, "scale matrix shape does not match tensor");
  }
  QuantizedTensor q;
  q.rows = rows;
  q.cols = cols;
  q.config = cfg;
  q.scales = std::move(scales);
  q.codes.resize(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const std::uint8_t b = bytes[i * row_bytes + j / 2];
      const int nibble = (j % 2 == 0) ? (b & 0x0F) : (b >> 4);
      q.codes[i * cols + j] = static_cast<std::int8_t>(nibble >= 8 ? nibble - 16 : nibble);
    }
  }
  return q;
}

bool in_lattice(const QuantizedTensor& q) {
  if (q.codes.size() != q.rows * q.cols) return false;
  for (auto c : q.codes) {
    if (c < q.config.code_min() || c > q.config.code_max()) return false;
  }
  for (double s : q.scales.data()) {
    if (!(s >= q.config.scale_floor)) return false;
  }
  return true;
}

}  // namespace tarq

namespace tarq {

Matrix dequantize(const QuantizedTensor& q, const FpColumns& kept) {
  Matrix w = dequantize(q);
  if (kept.empty()) return w;
  require_dims(kept.values.rows() == q.rows && kept.values.cols() == kept.columns.size(),
               "kept-column values shape");
  for (std::size_t k = 0; k < kept.columns.size(); ++k) {
    require_dims(kept.columns[k] < q.cols, "kept column index out of range");
    for (std::size_t i = 0; i < q.rows; ++i) w(i, kept.columns[k]) = kept.values(i, k);
  }
  return w;
}

}  // namespace tarq
