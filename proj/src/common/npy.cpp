// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#include "forcedistill/common/npy.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <regex>
#include <string>

#include "forcedistill/common/error.hpp"

namespace forcedistill::npy {

static_assert(std::endian::native == std::endian::little, "npy IO assumes a little-endian host");

namespace {

constexpr char kMagic[] = "\x93NUMPY";

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void write_raw(const std::filesystem::path& path, const std::vector<std::size_t>& shape, const char* descr,
               const void* bytes, std::size_t nbytes, std::size_t count) {
  if (product(shape) != count) throw DimensionError("npy: shape does not match element count for " + path.string());
  std::string dims;
  for (std::size_t i = 0; i < shape.size(); ++i) dims += (i ? ", " : "") + std::to_string(shape[i]);
  if (shape.size() == 1) dims += ",";
  std::string header = std::string("{'descr': '") + descr + "', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, 6);
  const char version[2] = {1, 0};
  out.write(version, 2);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char len_bytes[2] = {static_cast<char>(len & 0xff), static_cast<char>(len >> 8)};
  out.write(len_bytes, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(nbytes));
  if (!out) throw IoError("short write to " + path.string());
}

template <class T>
Array<T> read_raw(const std::filesystem::path& path, const char* descr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char head[10];
  in.read(head, 10);
  if (!in || std::memcmp(head, kMagic, 6) != 0 || head[6] != 1)
    throw IoError(path.string() + " is not an npy v1 file");
  const std::size_t len = static_cast<unsigned char>(head[8]) | (static_cast<unsigned char>(head[9]) << 8);
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  static const std::regex pattern(R"(\{'descr': '([^']+)', 'fortran_order': False, 'shape': \(([0-9, ]*)\), \})");
  std::smatch m;
  if (!in || !std::regex_search(header, m, pattern)) throw IoError("unsupported npy header in " + path.string());
  if (m[1].str() != descr)
    throw IoError(path.string() + ": dtype " + m[1].str() + ", expected " + descr);
  Array<T> out;
  const std::string dims = m[2].str();
  static const std::regex number(R"([0-9]+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), number); it != std::sregex_iterator(); ++it)
    out.shape.push_back(std::stoull(it->str()));
  out.data.resize(product(out.shape));
  in.read(reinterpret_cast<char*>(out.data.data()), static_cast<std::streamsize>(out.data.size() * sizeof(T)));
  if (!in) throw IoError("truncated npy data in " + path.string());
  return out;
}

}  // namespace

void write(const std::filesystem::path& path, const std::vector<std::size_t>& shape, const std::vector<double>& data) {
  write_raw(path, shape, "<f8", data.data(), data.size() * sizeof(double), data.size());
}

void write(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
           const std::vector<std::uint8_t>& data) {
  write_raw(path, shape, "|u1", data.data(), data.size(), data.size());
}

Array<double> read_f64(const std::filesystem::path& path) { return read_raw<double>(path, "<f8"); }
Array<std::uint8_t> read_u8(const std::filesystem::path& path) { return read_raw<std::uint8_t>(path, "|u1"); }

}  // namespace forcedistill::npy
