// SPDX-License-Identifier: Apache-2.0
//
// Minimal binary checkpoint format: a named table of f32 tensors.
//
//   "TSCK"  u32 version  u32 count
//   repeated count times:
//     u32 name_len, name bytes, u32 ndim, u32 dims[ndim], f32 values[...]
//
// All integers and floats are little-endian. Values are stored as f32 even
// though the in-memory tensors are f64; training determinism only requires
// that save + load round-trips through the same f32 grid.

#pragma once

#include <map>
#include <string>

#include "ts2/numcore/tensor.hpp"

namespace ts2::numcore {

inline constexpr std::uint32_t k_checkpoint_version = 1;

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& state);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace ts2::numcore
