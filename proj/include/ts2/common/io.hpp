// SPDX-License-Identifier: Apache-2.0
//
// Little-endian binary primitives and small text-file helpers shared by
// the feature, codebook, units and checkpoint formats.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ts2::io {

void write_u32(std::ostream& out, std::uint32_t v);
void write_f32(std::ostream& out, float v);
std::uint32_t read_u32(std::istream& in);
float read_f32(std::istream& in);

void write_f32_array(std::ostream& out, const double* data, std::size_t n);
void read_f32_array(std::istream& in, double* data, std::size_t n);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

std::vector<std::string> split(const std::string& line, char sep);

}  // namespace ts2::io
