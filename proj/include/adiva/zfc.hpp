#pragma once

// ZFC1 tensor container.
//
//   magic      4 bytes  "ZFC1"
//   count      u32 LE
//   per tensor (sorted by name):
//     name_len u16 LE, name (UTF-8)
//     dtype    u8   0 = float32, 1 = int64, 2 = float64, 3 = uint8
//     rank     u8
//     dims     rank x u64 LE
//     payload  row-major LE, product(dims) x sizeof(dtype)
//
// float64 and uint8 are used by checkpoints (bit-exact parameters, config text).

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "adiva/error.hpp"
#include "adiva/tensor.hpp"

namespace adiva::zfc {

static_assert(std::endian::native == std::endian::little, "ZFC1 I/O assumes a little-endian host");

enum class DType : std::uint8_t { kFloat32 = 0, kInt64 = 1, kFloat64 = 2, kUInt8 = 3 };

inline std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kFloat32: return 4;
    case DType::kInt64: return 8;
    case DType::kFloat64: return 8;
    case DType::kUInt8: return 1;
  }
  return 0;
}

inline const char* dtype_name(DType d) {
  switch (d) {
    case DType::kFloat32: return "float32";
    case DType::kInt64: return "int64";
    case DType::kFloat64: return "float64";
    case DType::kUInt8: return "uint8";
  }
  return "?";
}

/// One named tensor. Exactly one of the payload vectors is populated,
/// according to dtype; reals hold both float32 and float64 payloads.
struct Tensor {
  DType dtype = DType::kFloat32;
  std::vector<std::uint64_t> dims;
  std::vector<double> reals;
  std::vector<std::int64_t> ints;
  std::vector<std::uint8_t> bytes;

  std::uint64_t numel() const {
    return std::accumulate(dims.begin(), dims.end(), std::uint64_t{1}, std::multiplies<>());
  }

  bool operator==(const Tensor&) const = default;
};

using Container = std::map<std::string, Tensor>;

// ---------------------------------------------------------------------------
// Tensor construction helpers

inline Tensor real_tensor(const Mat& m, DType dtype = DType::kFloat32) {
  Tensor t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.reals.assign(m.data(), m.data() + m.size());
  if (dtype == DType::kFloat32) {
    for (double& x : t.reals) x = static_cast<double>(static_cast<float>(x));
  }
  return t;
}

inline Tensor int_tensor(const std::vector<std::int64_t>& v) {
  Tensor t;
  t.dtype = DType::kInt64;
  t.dims = {static_cast<std::uint64_t>(v.size())};
  t.ints = v;
  return t;
}

inline Tensor int_matrix(const std::vector<std::int64_t>& v, std::uint64_t rows, std::uint64_t cols) {
  Tensor t = int_tensor(v);
  t.dims = {rows, cols};
  return t;
}

inline Tensor text_tensor(const std::string& s) {
  Tensor t;
  t.dtype = DType::kUInt8;
  t.dims = {static_cast<std::uint64_t>(s.size())};
  t.bytes.assign(s.begin(), s.end());
  return t;
}

inline const Tensor& get(const Container& c, const std::string& name) {
  auto it = c.find(name);
  if (it == c.end()) throw data_error("MissingTensor", name);
  return it->second;
}

/// Reads a real tensor as a matrix. Rank 1 becomes a column; rank 3
/// (a x b x c) becomes (a*b) x c; rank 0 is 1x1.
inline Mat to_mat(const Tensor& t, const std::string& name) {
  if (t.dtype != DType::kFloat32 && t.dtype != DType::kFloat64) {
    throw data_error("DtypeMismatch", name + ": expected real tensor, got " + dtype_name(t.dtype));
  }
  Index rows = 1, cols = 1;
  if (t.dims.size() == 1) {
    rows = static_cast<Index>(t.dims[0]);
  } else if (t.dims.size() >= 2) {
    cols = static_cast<Index>(t.dims.back());
    rows = static_cast<Index>(t.numel() / std::max<std::uint64_t>(t.dims.back(), 1));
  }
  Mat m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = t.reals[static_cast<std::size_t>(i)];
  return m;
}

inline std::vector<std::int64_t> to_ints(const Tensor& t, const std::string& name) {
  if (t.dtype != DType::kInt64) throw data_error("DtypeMismatch", name + ": expected int64, got " + dtype_name(t.dtype));
  return t.ints;
}

inline std::string to_text(const Tensor& t, const std::string& name) {
  if (t.dtype != DType::kUInt8) throw data_error("DtypeMismatch", name + ": expected uint8, got " + dtype_name(t.dtype));
  return std::string(t.bytes.begin(), t.bytes.end());
}

// ---------------------------------------------------------------------------
// Encoding

namespace detail {
template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw data_error("Truncated", "unexpected end of ZFC1 data");
  }
  const std::string& data_;
  std::size_t pos_ = 0;
};
}  // namespace detail

inline std::string encode(const Container& c) {
  std::string out = "ZFC1";
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.size()));
  for (const auto& [name, t] : c) {
    if (name.size() > 0xFFFF) throw data_error("InvariantViolation", "tensor name too long: " + name.substr(0, 32));
    if (t.dims.size() > 0xFF) throw data_error("InvariantViolation", name + ": rank too large");
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (std::uint64_t d : t.dims) detail::put<std::uint64_t>(out, d);
    const std::uint64_t n = t.numel();
    switch (t.dtype) {
      case DType::kFloat32:
        if (t.reals.size() != n) throw data_error("DimMismatch", name);
        for (double x : t.reals) detail::put<float>(out, static_cast<float>(x));
        break;
      case DType::kFloat64:
        if (t.reals.size() != n) throw data_error("DimMismatch", name);
        for (double x : t.reals) detail::put<double>(out, x);
        break;
      case DType::kInt64:
        if (t.ints.size() != n) throw data_error("DimMismatch", name);
        for (std::int64_t x : t.ints) detail::put<std::int64_t>(out, x);
        break;
      case DType::kUInt8:
        if (t.bytes.size() != n) throw data_error("DimMismatch", name);
        out.append(reinterpret_cast<const char*>(t.bytes.data()), t.bytes.size());
        break;
    }
  }
  return out;
}

inline Container decode(const std::string& data) {
  if (data.size() < 4 || data.compare(0, 4, "ZFC1") != 0) throw data_error("BadMagic", "missing ZFC1 magic");
  detail::Reader r(data);
  r.bytes(4);
  const auto count = r.get<std::uint32_t>();
  Container c;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = r.get<std::uint16_t>();
    std::string name = r.bytes(len);
    Tensor t;
    const auto dt = r.get<std::uint8_t>();
    if (dt > 3) throw data_error("DtypeMismatch", name + ": unknown dtype byte " + std::to_string(dt));
    t.dtype = static_cast<DType>(dt);
    const auto rank = r.get<std::uint8_t>();
    for (int i = 0; i < rank; ++i) t.dims.push_back(r.get<std::uint64_t>());
    const std::uint64_t n = t.numel();
    if (n > (std::uint64_t{1} << 40) / dtype_size(t.dtype)) throw data_error("DimMismatch", name + ": implausible size");
    switch (t.dtype) {
      case DType::kFloat32:
        t.reals.resize(n);
        for (auto& x : t.reals) x = static_cast<double>(r.get<float>());
        break;
      case DType::kFloat64:
        t.reals.resize(n);
        for (auto& x : t.reals) x = r.get<double>();
        break;
      case DType::kInt64:
        t.ints.resize(n);
        for (auto& x : t.ints) x = r.get<std::int64_t>();
        break;
      case DType::kUInt8: {
        std::string b = r.bytes(n);
        t.bytes.assign(b.begin(), b.end());
        break;
      }
    }
    if (!c.emplace(std::move(name), std::move(t)).second) throw data_error("InvariantViolation", "duplicate tensor name");
  }
  if (!r.at_end()) throw data_error("InvariantViolation", "trailing bytes after last tensor");
  return c;
}

inline void write_file(const Container& c, const std::string& path) {
  const std::string bytes = encode(c);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("IoFailure", "cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("IoFailure", "write failed: " + path);
}

inline Container read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("IoFailure", "cannot open: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode(data);
}

}  // namespace adiva::zfc
