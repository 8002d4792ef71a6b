#pragma once

// TQT1 container:
//   "TQT1" | u32 version (1) | u32 section_count | sections
//   section = u8 type | u64 payload_length | payload
// All integers and floats are little-endian.
//   0x01 fp tensor:   u32 ndim | u64 dims[ndim] | f32 data (row-major)
//   0x02 packed quant: u32 bits | u32 group | u64 rows | u64 cols |
//                      f32 scales (rows x ceil(cols/group)) | pack4 bytes
//   0x03 fp columns:  u64 rows | u64 count | u64 columns[count] |
//                      f32 values (rows x count, row-major)

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "tarq/lattice.hpp"

namespace tarq::io {

enum class SectionType : std::uint8_t {
  kFpTensor = 0x01,
  kPackedQuant = 0x02,
  kFpColumns = 0x03,
};

struct Section {
  SectionType type = SectionType::kFpTensor;
  std::vector<std::uint8_t> payload;

  bool operator==(const Section&) const = default;
};

struct TensorFile {
  std::vector<Section> sections;

  bool operator==(const TensorFile&) const = default;
};

inline constexpr std::uint32_t kVersion = 1;

std::vector<std::uint8_t> encode(const TensorFile& file);
// Throws ParseError on bad magic, version, truncation or trailing bytes.
TensorFile decode(const std::vector<std::uint8_t>& bytes);

void write_file(const std::string& path, const TensorFile& file);
TensorFile read_file(const std::string& path);

struct FpTensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  bool operator==(const FpTensor&) const = default;
};

Section encode_fp_tensor(const FpTensor& t);
FpTensor decode_fp_tensor(const Section& s);

// Matrix <-> 2-D fp tensor. Values are narrowed to f32 on the way out.
FpTensor to_fp_tensor(const Matrix& m);
Matrix to_matrix(const FpTensor& t);  // 1-D tensors become a single column

Section encode_packed(const QuantizedTensor& q);
QuantizedTensor decode_packed(const Section& s);

Section encode_fp_columns(const FpColumns& cols);
FpColumns decode_fp_columns(const Section& s);

}  // namespace tarq::io
