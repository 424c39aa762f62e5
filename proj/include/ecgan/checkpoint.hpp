#pragma once

#include "ecgan/common.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace ecgan {

/// Named real tensors. Every tensor is stored as a 2-D row-major matrix.
using TensorMap = std::map<std::string, Matrix>;

/// File layout, all integers little-endian:
///   "ECGT"  magic
///   u32     version (1)
///   u32     tensor count
///   per tensor, in name order:
///     u32 name length, name bytes (UTF-8)
///     u32 rank (always 2), u64 rows, u64 cols
///     rows·cols IEEE-754 binary64 values, row-major, little-endian
void save_tensors(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_tensors(const std::filesystem::path& path);

}  // namespace ecgan
