#pragma once

#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace moca {

// Runs fn(i) for i in [0, n). Each index is computed by exactly one worker
// with the same per-index instruction order regardless of the worker count,
// so results are bitwise independent of `jobs`.
inline void parallel_for(int64_t n, int jobs, const std::function<void(int64_t)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    int workers = static_cast<int>(std::min<int64_t>(jobs, n));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w]() {
            for (int64_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

inline int default_jobs() {
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace moca
