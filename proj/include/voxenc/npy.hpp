#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "voxenc/error.hpp"

namespace voxenc::io {

enum class Dtype { f32, f64, i32 };

inline const char* dtype_descr(Dtype d) {
  switch (d) {
    case Dtype::f32: return "<f4";
    case Dtype::f64: return "<f8";
    case Dtype::i32: return "<i4";
  }
  return "";
}

inline std::size_t dtype_size(Dtype d) { return d == Dtype::f64 ? 8 : 4; }

// Row-major n-dimensional array, 1 to 3 dims, three dtypes. On disk this is
// the standard binary container with the 0x93 "NUMPY" v1.0 header.
struct ArrayContainer {
  std::vector<std::size_t> shape;
  Dtype dtype = Dtype::f64;
  std::variant<std::vector<float>, std::vector<double>, std::vector<std::int32_t>> data;

  std::size_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  template <class T>
  const std::vector<T>& as() const { return std::get<std::vector<T>>(data); }
  template <class T>
  std::vector<T>& as() { return std::get<std::vector<T>>(data); }

  double at_flat(std::size_t i) const {
    switch (dtype) {
      case Dtype::f32: return as<float>()[i];
      case Dtype::f64: return as<double>()[i];
      case Dtype::i32: return as<std::int32_t>()[i];
    }
    return 0.0;
  }

  static ArrayContainer from_doubles(std::vector<std::size_t> shape, std::vector<double> values) {
    ArrayContainer a;
    a.shape = std::move(shape);
    a.dtype = Dtype::f64;
    a.data = std::move(values);
    require(a.as<double>().size() == a.size(), Errc::bad_shape, "shape/data size mismatch");
    return a;
  }
};

namespace detail {

inline std::string shape_repr(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    s += std::to_string(shape[i]);
    if (shape.size() == 1) s += ",";
    else if (i + 1 < shape.size()) s += ", ";
  }
  s += ")";
  return s;
}

// Extracts the value after `'key':` in the header dict. The header grammar is
// fixed enough that positional scanning is reliable.
inline std::string header_field(const std::string& header, const std::string& key) {
  const std::string needle = "'" + key + "':";
  const auto pos = header.find(needle);
  require(pos != std::string::npos, Errc::bad_header, "missing header key '" + key + "'");
  std::size_t i = pos + needle.size();
  while (i < header.size() && header[i] == ' ') ++i;
  require(i < header.size(), Errc::bad_header, "truncated header value for '" + key + "'");
  if (header[i] == '\'') {
    const auto end = header.find('\'', i + 1);
    require(end != std::string::npos, Errc::bad_header, "unterminated string in header");
    return header.substr(i + 1, end - i - 1);
  }
  if (header[i] == '(') {
    const auto end = header.find(')', i);
    require(end != std::string::npos, Errc::bad_header, "unterminated tuple in header");
    return header.substr(i, end - i + 1);
  }
  std::size_t end = i;
  while (end < header.size() && header[end] != ',' && header[end] != '}') ++end;
  return header.substr(i, end - i);
}

inline std::vector<std::size_t> parse_shape(const std::string& repr) {
  std::vector<std::size_t> shape;
  std::string digits;
  for (char c : repr) {
    if (c >= '0' && c <= '9') {
      digits += c;
    } else if (!digits.empty()) {
      shape.push_back(static_cast<std::size_t>(std::stoull(digits)));
      digits.clear();
    }
  }
  return shape;
}

template <class T>
std::vector<T> read_payload(std::ifstream& in, std::size_t count, const std::string& what) {
  std::vector<T> values(count);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(count * sizeof(T)));
  require(static_cast<std::size_t>(in.gcount()) == count * sizeof(T), Errc::truncated_payload,
          "short payload in " + what);
  return values;
}

// Fortran-ordered payloads are transposed into row-major on read.
template <class T>
std::vector<T> to_row_major(const std::vector<T>& col, const std::vector<std::size_t>& shape) {
  std::vector<T> row(col.size());
  if (shape.size() == 1) return col;
  if (shape.size() == 2) {
    const std::size_t r = shape[0], c = shape[1];
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) row[i * c + j] = col[j * r + i];
    return row;
  }
  const std::size_t a = shape[0], b = shape[1], c = shape[2];
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k) row[(i * b + j) * c + k] = col[(k * b + j) * a + i];
  return row;
}

}  // namespace detail

inline ArrayContainer read_array(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), Errc::io_failure, "cannot open " + path.string());

  char magic[6] = {};
  in.read(magic, 6);
  require(in.gcount() == 6 && std::memcmp(magic, "\x93NUMPY", 6) == 0, Errc::bad_magic,
          "bad magic in " + path.string());

  unsigned char version[2] = {};
  in.read(reinterpret_cast<char*>(version), 2);
  require(in.gcount() == 2, Errc::bad_header, "truncated version in " + path.string());
  require(version[0] == 1 && version[1] == 0, Errc::unsupported_version,
          "only format version 1.0 is supported");

  unsigned char len_bytes[2] = {};
  in.read(reinterpret_cast<char*>(len_bytes), 2);
  require(in.gcount() == 2, Errc::bad_header, "truncated header length");
  const std::size_t header_len = static_cast<std::size_t>(len_bytes[0]) |
                                 (static_cast<std::size_t>(len_bytes[1]) << 8);
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  require(static_cast<std::size_t>(in.gcount()) == header_len, Errc::bad_header,
          "truncated header");
  require(!header.empty() && header.back() == '\n', Errc::bad_header,
          "header must end with newline");

  const std::string descr = detail::header_field(header, "descr");
  const std::string order = detail::header_field(header, "fortran_order");
  const std::vector<std::size_t> shape = detail::parse_shape(detail::header_field(header, "shape"));
  require(order == "True" || order == "False", Errc::bad_header, "bad fortran_order value");
  require(shape.size() >= 1 && shape.size() <= 3, Errc::bad_shape,
          "only 1-3 dimensional arrays are supported");
  const bool fortran = order == "True";

  ArrayContainer a;
  a.shape = shape;
  const std::size_t count = a.size();
  const std::string what = path.string();
  if (descr == "<f4") {
    a.dtype = Dtype::f32;
    auto v = detail::read_payload<float>(in, count, what);
    a.data = fortran ? detail::to_row_major(v, shape) : std::move(v);
  } else if (descr == "<f8") {
    a.dtype = Dtype::f64;
    auto v = detail::read_payload<double>(in, count, what);
    a.data = fortran ? detail::to_row_major(v, shape) : std::move(v);
  } else if (descr == "<i4") {
    a.dtype = Dtype::i32;
    auto v = detail::read_payload<std::int32_t>(in, count, what);
    a.data = fortran ? detail::to_row_major(v, shape) : std::move(v);
  } else {
    raise(Errc::unsupported_dtype, "dtype '" + descr + "' not supported");
  }
  return a;
}

inline void write_array(const ArrayContainer& a, const std::filesystem::path& path) {
  require(a.shape.size() >= 1 && a.shape.size() <= 3, Errc::bad_shape, "1-3 dims required");
  std::visit([&](const auto& v) {
    require(v.size() == a.size(), Errc::bad_shape, "shape/data size mismatch");
  }, a.data);

  std::string dict = "{'descr': '";
  dict += dtype_descr(a.dtype);
  dict += "', 'fortran_order': False, 'shape': ";
  dict += detail::shape_repr(a.shape);
  dict += ", }";
  // Pad with spaces so magic + version + length + header is 64-byte aligned,
  // with a single trailing newline.
  const std::size_t base = 6 + 2 + 2 + dict.size() + 1;
  const std::size_t padded = (base + 63) / 64 * 64;
  dict += std::string(padded - base, ' ');
  dict += '\n';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), Errc::io_failure, "cannot open " + path.string() + " for writing");
  out.write("\x93NUMPY", 6);
  const unsigned char version[2] = {1, 0};
  out.write(reinterpret_cast<const char*>(version), 2);
  const std::size_t hlen = dict.size();
  require(hlen <= 0xFFFF, Errc::bad_header, "header too large");
  const unsigned char len_bytes[2] = {static_cast<unsigned char>(hlen & 0xFF),
                                      static_cast<unsigned char>((hlen >> 8) & 0xFF)};
  out.write(reinterpret_cast<const char*>(len_bytes), 2);
  out.write(dict.data(), static_cast<std::streamsize>(dict.size()));
  std::visit([&](const auto& v) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(T)));
  }, a.data);
  require(out.good(), Errc::io_failure, "write failed for " + path.string());
}

// --- Eigen bridges ---------------------------------------------------------

inline Eigen::MatrixXd to_matrix(const ArrayContainer& a) {
  require(a.shape.size() == 2, Errc::bad_shape, "expected a 2-D array");
  const auto rows = static_cast<Eigen::Index>(a.shape[0]);
  const auto cols = static_cast<Eigen::Index>(a.shape[1]);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = a.at_flat(static_cast<std::size_t>(i) * a.shape[1] + static_cast<std::size_t>(j));
  return m;
}

inline ArrayContainer from_matrix(const Eigen::MatrixXd& m) {
  std::vector<double> values(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      values[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  return ArrayContainer::from_doubles(
      {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(values));
}

inline std::vector<double> to_doubles(const ArrayContainer& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at_flat(i);
  return v;
}

}  // namespace voxenc::io
