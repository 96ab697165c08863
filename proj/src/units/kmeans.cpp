// SPDX-License-Identifier: Apache-2.0

#include "ts2/units/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "ts2/common/error.hpp"
#include "ts2/common/io.hpp"
#include "ts2/common/rng.hpp"

namespace ts2::units {

namespace {

double sq_dist(const double* a, const double* b, int d) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

int count_distinct_rows(const numcore::Tensor& frames, int stop_at) {
    const int n = frames.extent(0), d = frames.extent(1);
    std::unordered_set<std::string> seen;
    for (int i = 0; i < n; ++i) {
        std::string key(reinterpret_cast<const char*>(frames.data() + static_cast<long>(i) * d),
                        sizeof(double) * static_cast<std::size_t>(d));
        seen.insert(std::move(key));
        if (static_cast<int>(seen.size()) >= stop_at) return stop_at;
    }
    return static_cast<int>(seen.size());
}

}  // namespace

Codebook kmeans_fit(const numcore::Tensor& frames, int k, std::uint64_t seed,
                    KmeansStats* stats) {
    numcore::require(frames.ndim() == 2, "kmeans: frames must be [N,D], got " + frames.shape_str());
    numcore::require(k >= 1, "kmeans: k must be positive");
    const int n = frames.extent(0), d = frames.extent(1);
    if (count_distinct_rows(frames, k) < k)
        throw DataError("kmeans: need at least " + std::to_string(k) +
                        " distinct frames, corpus has fewer");

    Rng rng(seed);
    numcore::Tensor centroids({k, d});
    const double* fd = frames.data();

    // k-means++ seeding: first centroid uniform, the rest proportional to the
    // squared distance from the nearest already-chosen centroid.
    std::vector<double> min_sq(n, std::numeric_limits<double>::infinity());
    {
        const int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        std::memcpy(centroids.data(), fd + static_cast<long>(first) * d, sizeof(double) * d);
    }
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        const double* prev = centroids.data() + static_cast<long>(c - 1) * d;
        for (int i = 0; i < n; ++i) {
            min_sq[i] = std::min(min_sq[i], sq_dist(fd + static_cast<long>(i) * d, prev, d));
            total += min_sq[i];
        }
        int chosen = -1;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                acc += min_sq[i];
                if (acc >= r) {
                    chosen = i;
                    break;
                }
            }
        }
        if (chosen < 0) {
            // All mass at zero distance can only happen transiently (duplicate
            // frames); fall back to the first point not yet at distance 0.
            for (int i = 0; i < n; ++i)
                if (min_sq[i] > 0.0) {
                    chosen = i;
                    break;
                }
            if (chosen < 0) chosen = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        }
        std::memcpy(centroids.data() + static_cast<long>(c) * d,
                    fd + static_cast<long>(chosen) * d, sizeof(double) * d);
    }

    std::vector<int> assign(n, 0);
    std::vector<int> counts(k, 0);
    double prev_inertia = std::numeric_limits<double>::infinity();
    constexpr int k_max_iters = 100;
    constexpr double k_rel_tol = 1e-6;

    int iter = 0;
    for (; iter < k_max_iters; ++iter) {
        // Assignment step; ties go to the lowest centroid index via strict <.
        std::fill(counts.begin(), counts.end(), 0);
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_sq = sq_dist(fd + static_cast<long>(i) * d, centroids.data(), d);
            for (int c = 1; c < k; ++c) {
                const double sq =
                    sq_dist(fd + static_cast<long>(i) * d, centroids.data() + static_cast<long>(c) * d, d);
                if (sq < best_sq) {
                    best_sq = sq;
                    best = c;
                }
            }
            assign[i] = best;
            ++counts[best];
        }

        // Update step: means of each cluster.
        centroids.fill(0.0);
        for (int i = 0; i < n; ++i) {
            double* cd = centroids.data() + static_cast<long>(assign[i]) * d;
            const double* row = fd + static_cast<long>(i) * d;
            for (int j = 0; j < d; ++j) cd[j] += row[j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            double* cd = centroids.data() + static_cast<long>(c) * d;
            for (int j = 0; j < d; ++j) cd[j] /= counts[c];
        }

        // Re-seed empty clusters with the point farthest from its centroid.
        std::vector<bool> reseeded(n, false);
        for (int c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            int far = -1;
            double far_sq = -1.0;
            for (int i = 0; i < n; ++i) {
                if (reseeded[i] || counts[assign[i]] <= 1) continue;
                const double sq = sq_dist(fd + static_cast<long>(i) * d,
                                          centroids.data() + static_cast<long>(assign[i]) * d, d);
                if (sq > far_sq) {
                    far_sq = sq;
                    far = i;
                }
            }
            if (far < 0) continue;  // degenerate: nothing movable
            reseeded[far] = true;
            --counts[assign[far]];
            std::memcpy(centroids.data() + static_cast<long>(c) * d,
                        fd + static_cast<long>(far) * d, sizeof(double) * d);
            assign[far] = c;
            counts[c] = 1;
        }

        // Inertia against the updated centroids (what the next assignment
        // step will see); Lloyd guarantees this never increases.
        double inertia = 0.0;
        for (int i = 0; i < n; ++i) {
            double best_sq = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c)
                best_sq = std::min(best_sq, sq_dist(fd + static_cast<long>(i) * d,
                                                    centroids.data() + static_cast<long>(c) * d, d));
            inertia += best_sq;
        }
        if (stats) stats->inertia.push_back(inertia);

        if (std::isfinite(prev_inertia)) {
            const double denom = std::max(prev_inertia, 1e-300);
            if ((prev_inertia - inertia) / denom < k_rel_tol) {
                ++iter;
                break;
            }
        }
        prev_inertia = inertia;
    }
    if (stats) stats->iterations = iter;

    Codebook cb;
    cb.centroids = std::move(centroids);
    return cb;
}

UnitSeq quantize(const numcore::Tensor& features, const Codebook& cb) {
    if (features.empty()) return {};
    numcore::require(features.ndim() == 2,
                     "quantize: features must be [T,D], got " + features.shape_str());
    if (features.extent(1) != cb.dim())
        throw ConfigError("quantize: feature dim " + std::to_string(features.extent(1)) +
                          " does not match codebook dim " + std::to_string(cb.dim()));
    const int t = features.extent(0), d = cb.dim(), k = cb.size();
    UnitSeq out(static_cast<std::size_t>(t));
    for (int i = 0; i < t; ++i) {
        const double* row = features.data() + static_cast<long>(i) * d;
        int best = 0;
        double best_sq = sq_dist(row, cb.centroids.data(), d);
        for (int c = 1; c < k; ++c) {
            const double sq = sq_dist(row, cb.centroids.data() + static_cast<long>(c) * d, d);
            if (sq < best_sq) {
                best_sq = sq;
                best = c;
            }
        }
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

void write_codebook(const std::filesystem::path& path, const Codebook& cb) {
    std::ostringstream out;
    out.precision(17);
    out << cb.size() << ' ' << cb.dim() << '\n';
    for (int c = 0; c < cb.size(); ++c) {
        for (int j = 0; j < cb.dim(); ++j) {
            if (j) out << ' ';
            out << cb.centroids.at2(c, j);
        }
        out << '\n';
    }
    io::write_text_file(path, out.str());
}

Codebook read_codebook(const std::filesystem::path& path) {
    std::istringstream in(io::read_text_file(path));
    int k = 0, d = 0;
    if (!(in >> k >> d) || k < 1 || d < 1)
        throw DataError("codebook file has a bad header: " + path.string());
    Codebook cb;
    cb.centroids = numcore::Tensor({k, d});
    for (int i = 0; i < k * d; ++i) {
        if (!(in >> cb.centroids[i]))
            throw DataError("codebook file is truncated: " + path.string());
    }
    return cb;
}

}  // namespace ts2::units
