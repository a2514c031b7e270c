#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

namespace somno {

/// Worker cap for internal parallelism. Reads SOMNO_THREADS once; defaults to
/// hardware concurrency (at most 8).
inline int thread_count() {
    static const int cached = [] {
        if (const char* env = std::getenv("SOMNO_THREADS")) {
            const long v = std::strtol(env, nullptr, 10);
            if (v >= 1) return static_cast<int>(std::min<long>(v, 64));
        }
        const unsigned hw = std::thread::hardware_concurrency();
        return static_cast<int>(std::clamp(hw, 1u, 8u));
    }();
    return cached;
}

/// Runs fn(begin, end) over disjoint slices of [0, n). Each index is handled
/// by exactly one worker and per-element computation order inside fn is the
/// serial order, so results are bitwise independent of the thread count.
template <typename Fn>
void parallel_for(std::int64_t n, std::int64_t min_grain, Fn&& fn) {
    if (n <= 0) return;
    const int workers = thread_count();
    if (workers <= 1 || n < 2 * min_grain) {
        fn(std::int64_t{0}, n);
        return;
    }
    const std::int64_t chunks = std::min<std::int64_t>(workers, (n + min_grain - 1) / min_grain);
    const std::int64_t stride = (n + chunks - 1) / chunks;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(chunks));
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::int64_t lo = c * stride;
        const std::int64_t hi = std::min(n, lo + stride);
        if (lo >= hi) break;
        pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
    }
    for (auto& t : pool) t.join();
}

} // namespace somno
