// SPDX-License-Identifier: Apache-2.0

#include "ts2/numcore/checkpoint.hpp"

#include <fstream>

#include "ts2/common/error.hpp"
#include "ts2/common/io.hpp"

namespace ts2::numcore {

namespace {

constexpr char k_magic[4] = {'T', 'S', 'C', 'K'};

}  // namespace

void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& state) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(k_magic, 4);
    io::write_u32(out, k_checkpoint_version);
    io::write_u32(out, static_cast<std::uint32_t>(state.size()));
    for (const auto& [name, tensor] : state) {
        io::write_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        io::write_u32(out, static_cast<std::uint32_t>(tensor.ndim()));
        for (int d = 0; d < tensor.ndim(); ++d)
            io::write_u32(out, static_cast<std::uint32_t>(tensor.extent(d)));
        io::write_f32_array(out, tensor.data(), static_cast<std::size_t>(tensor.numel()));
    }
    if (!out) throw IoError("write failure on checkpoint: " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != std::string(k_magic, 4))
        throw IoError("not a checkpoint file (bad magic): " + path);
    const std::uint32_t version = io::read_u32(in);
    if (version != k_checkpoint_version)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    const std::uint32_t count = io::read_u32(in);
    std::map<std::string, Tensor> state;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = io::read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t ndim = io::read_u32(in);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(io::read_u32(in));
        Tensor t(shape);
        io::read_f32_array(in, t.data(), static_cast<std::size_t>(t.numel()));
        if (!in) throw IoError("truncated checkpoint: " + path);
        state.emplace(std::move(name), std::move(t));
    }
    return state;
}

}  // namespace ts2::numcore
