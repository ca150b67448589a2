// Copyright 2026 The forcedistill Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace forcedistill::npy {

// NumPy .npy version 1.0, little-endian, C order. Only '<f8' and '|u1'.
template <class T>
struct Array {
  std::vector<std::size_t> shape;
  std::vector<T> data;
};

void write(const std::filesystem::path& path, const std::vector<std::size_t>& shape, const std::vector<double>& data);
void write(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
           const std::vector<std::uint8_t>& data);

Array<double> read_f64(const std::filesystem::path& path);  // throws IoError
Array<std::uint8_t> read_u8(const std::filesystem::path& path);

}  // namespace forcedistill::npy
