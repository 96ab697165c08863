// SPDX-License-Identifier: Apache-2.0
//
// K-means codebook fitting and frame quantization. The codebook is immutable
// after fit; quantize is a pure function and safe to call from many threads.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ts2/numcore/tensor.hpp"
#include "ts2/units/units.hpp"

namespace ts2::units {

struct Codebook {
    numcore::Tensor centroids;  // [K, D]

    int size() const { return centroids.empty() ? 0 : centroids.extent(0); }
    int dim() const { return centroids.empty() ? 0 : centroids.extent(1); }
};

struct KmeansStats {
    std::vector<double> inertia;  // per iteration, after the centroid update
    int iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. Converges when the relative
// inertia improvement drops below 1e-6 or after 100 iterations. Clusters
// that empty out are re-seeded to the point farthest from its assigned
// centroid. Throws DataError when the frames hold fewer than k distinct
// rows.
Codebook kmeans_fit(const numcore::Tensor& frames, int k, std::uint64_t seed,
                    KmeansStats* stats = nullptr);

// Nearest centroid per frame by Euclidean distance; ties go to the lowest
// index. Throws ConfigError on dimension mismatch.
UnitSeq quantize(const numcore::Tensor& features, const Codebook& cb);

// Codebook file: header line "K D", then K rows of D decimals.
void write_codebook(const std::filesystem::path& path, const Codebook& cb);
Codebook read_codebook(const std::filesystem::path& path);

}  // namespace ts2::units
