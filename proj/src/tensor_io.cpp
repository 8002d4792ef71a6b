#include "tarq/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace tarq::io {
namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) out_.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::vector<std::uint8_t>& b) { out_.insert(out_.end(), b.begin(), b.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * k);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * k);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::vector<std::uint8_t> bytes(std::uint64_t n) {
    need(n);
    std::vector<std::uint8_t> out(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return size_ - pos_; }
  void expect_end(const char* what) const {
    if (pos_ != size_) throw Error(ErrorCode::kParseError, std::string("trailing bytes in ") + what);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > size_ - pos_) throw Error(ErrorCode::kParseError, "truncated tensor data");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void expect_type(const Section& s, SectionType t) {
  if (s.type != t) throw Error(ErrorCode::kParseError, "unexpected section type");
}

std::uint64_t checked_product(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d != 0 && n > UINT64_MAX / d) throw Error(ErrorCode::kParseError, "tensor too large");
    n *= d;
  }
  return n;
}

}  // namespace

std::vector<std::uint8_t> encode(const TensorFile& file) {
  Writer w;
  for (char c : std::string("TQT1")) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(file.sections.size()));
  for (const auto& s : file.sections) {
    w.u8(static_cast<std::uint8_t>(s.type));
    w.u64(s.payload.size());
    w.bytes(s.payload);
  }
  return w.take();
}

TensorFile decode(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  const auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), "TQT1", 4) != 0) throw Error(ErrorCode::kParseError, "bad magic");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw Error(ErrorCode::kParseError, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  TensorFile file;
  for (std::uint32_t k = 0; k < count; ++k) {
    Section s;
    const std::uint8_t type = r.u8();
    if (type < 0x01 || type > 0x03) {
      throw Error(ErrorCode::kParseError, "unknown section type " + std::to_string(type));
    }
    s.type = static_cast<SectionType>(type);
    s.payload = r.bytes(r.u64());
    file.sections.push_back(std::move(s));
  }
  r.expect_end("tensor file");
  return file;
}

void write_file(const std::string& path, const TensorFile& file) {
  const auto bytes = encode(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIoError, "short write to " + path);
}

TensorFile read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode(bytes);
}

Section encode_fp_tensor(const FpTensor& t) {
  if (checked_product(t.dims) != t.data.size()) {
    throw Error(ErrorCode::kDimMismatch, "fp tensor dims do not match data");
  }
  Writer w;
  w.u32(static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) w.u64(d);
  for (float v : t.data) w.f32(v);
  return {SectionType::kFpTensor, w.take()};
}

FpTensor decode_fp_tensor(const Section& s) {
  expect_type(s, SectionType::kFpTensor);
  Reader r(s.payload.data(), s.payload.size());
  FpTensor t;
  const std::uint32_t ndim = r.u32();
  if (ndim > 8) throw Error(ErrorCode::kParseError, "too many tensor dimensions");
  for (std::uint32_t k = 0; k < ndim; ++k) t.dims.push_back(r.u64());
  const std::uint64_t n = checked_product(t.dims);
  if (n > r.remaining() / 4) throw Error(ErrorCode::kParseError, "truncated fp tensor");
  t.data.resize(n);
  for (auto& v : t.data) v = r.f32();
  r.expect_end("fp tensor");
  return t;
}

FpTensor to_fp_tensor(const Matrix& m) {
  FpTensor t;
  t.dims = {m.rows(), m.cols()};
  t.data.reserve(m.size());
  for (double v : m.data()) t.data.push_back(static_cast<float>(v));
  return t;
}

Matrix to_matrix(const FpTensor& t) {
  std::size_t rows = 0, cols = 0;
  if (t.dims.size() == 2) {
    rows = t.dims[0];
    cols = t.dims[1];
  } else if (t.dims.size() == 1) {
    rows = t.dims[0];
    cols = 1;
  } else {
    throw Error(ErrorCode::kParseError, "expected a 1-D or 2-D tensor");
  }
  std::vector<double> data(t.data.begin(), t.data.end());
  return Matrix(rows, cols, std::move(data));
}

Section encode_packed(const QuantizedTensor& q) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(q.config.bits));
  w.u32(static_cast<std::uint32_t>(q.config.group_size));
  w.u64(q.rows);
  w.u64(q.cols);
  for (double s : q.scales.data()) w.f32(static_cast<float>(s));
  w.bytes(pack4(q));
  return {SectionType::kPackedQuant, w.take()};
}

QuantizedTensor decode_packed(const Section& s) {
  expect_type(s, SectionType::kPackedQuant);
  Reader r(s.payload.data(), s.payload.size());
  QuantConfig cfg;
  cfg.bits = static_cast<int>(r.u32());
  cfg.group_size = r.u32();
  if (cfg.group_size == 0) throw Error(ErrorCode::kParseError, "group size 0");
  if (cfg.bits != 4) throw Error(ErrorCode::kBitsUnsupported, "packed section is not 4-bit");
  const std::uint64_t rows = r.u64();
  const std::uint64_t cols = r.u64();
  const std::uint64_t groups = cfg.num_groups(cols);
  if (rows * groups > r.remaining() / 4) throw Error(ErrorCode::kParseError, "truncated scales");
  Matrix scales(rows, groups);
  for (double& v : scales.data()) v = r.f32();
  const auto packed = r.bytes(rows * ((cols + 1) / 2));
  r.expect_end("packed section");
  // A floor-valued scale narrowed to f32 can land just below the double floor.
  double min_scale = cfg.scale_floor;
  for (double v : scales.data()) min_scale = std::min(min_scale, v);
  if (!(min_scale > 0.0)) throw Error(ErrorCode::kParseError, "non-positive scale");
  cfg.scale_floor = min_scale;
  return unpack4(packed, rows, cols, std::move(scales), cfg);
}

Section encode_fp_columns(const FpColumns& cols) {
  Writer w;
  w.u64(cols.values.rows());
  w.u64(cols.columns.size());
  for (auto c : cols.columns) w.u64(c);
  for (double v : cols.values.data()) w.f32(static_cast<float>(v));
  return {SectionType::kFpColumns, w.take()};
}

FpColumns decode_fp_columns(const Section& s) {
  expect_type(s, SectionType::kFpColumns);
  Reader r(s.payload.data(), s.payload.size());
  const std::uint64_t rows = r.u64();
  const std::uint64_t count = r.u64();
  if (count > r.remaining() / 8) throw Error(ErrorCode::kParseError, "truncated column list");
  FpColumns out;
  for (std::uint64_t k = 0; k < count; ++k) out.columns.push_back(r.u64());
  if (rows * count > r.remaining() / 4) throw Error(ErrorCode::kParseError, "truncated columns");
  out.values = Matrix(rows, count);
  for (double& v : out.values.data()) v = r.f32();
  r.expect_end("fp column section");
  return out;
}

}  // namespace tarq::io
