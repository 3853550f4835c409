#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace vitclust {

/// Process-wide worker count used by the data-parallel loops. 0 or 1 means
/// run inline on the calling thread.
void set_num_threads(unsigned n);
unsigned num_threads();

/// Runs body(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; chunk boundaries depend only on n and the thread
/// count, so per-index results are independent of scheduling.
template <typename Body>
void parallel_for(std::size_t n, Body&& body) {
    const std::size_t workers = std::min<std::size_t>(std::max(1u, num_threads()), n);
    if (workers <= 1) {
        if (n > 0) body(std::size_t{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace vitclust
