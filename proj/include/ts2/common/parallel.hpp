// SPDX-License-Identifier: Apache-2.0
//
// Deterministic fork-join helper: runs fn(i) for i in [0, n) on up to
// `workers` threads. Results must be written to pre-sized slots indexed by
// i, so the schedule never changes the output. Exceptions are captured and
// the first one (lowest index) is rethrown on join.

#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace ts2 {

template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
    if (n <= 0) {
        return;
    }
    if (workers <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    const int threads = std::min(workers, n);
    std::atomic<int> next{0};
    std::mutex error_mutex;
    int error_index = -1;
    std::exception_ptr error;

    auto body = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_mutex);
                if (error_index < 0 || i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back(body);
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

}  // namespace ts2
