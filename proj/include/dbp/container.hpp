#pragma once

#include "dbp/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace dbp {

// Tensor container layout (all little-endian):
//   "DBPT" | u8 version = 1 | u8 dtype = 0 (f64) | u8 rank | rank x u64 extents | f64 payload
inline constexpr char kContainerMagic[4] = {'D', 'B', 'P', 'T'};
inline constexpr std::uint8_t kContainerVersion = 1;

void write_tensor(std::ostream &os, const Tensor &t);
Tensor read_tensor(std::istream &is);

void save_tensor(const std::filesystem::path &path, const Tensor &t);
/// Throws DataError on missing, truncated or malformed files.
Tensor load_tensor(const std::filesystem::path &path);

} // namespace dbp
