#pragma once

#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mlsq {

/// Runs fn(i) for i in [0, n) on a fixed number of worker threads.
/// Work is split into deterministic contiguous chunks, so any reduction
/// done per chunk and merged in chunk order is independent of timing.
/// The first exception thrown by any chunk is rethrown on the caller.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0) {
    if (n == 0) return;
    unsigned hw = threads ? threads : std::thread::hardware_concurrency();
    if (hw <= 1 || (threads == 0 && n < 256)) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::size_t chunk = (n + hw - 1) / hw;
    std::vector<std::thread> pool;
    pool.reserve(hw);
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (unsigned t = 0; t < hw; ++t) {
        std::size_t lo = t * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&fn, &first_error, &error_mutex, lo, hi] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace mlsq
