#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace prunenet {

// Process-wide worker cap, set once by the CLI (--threads). 0 = hardware count.
inline std::size_t& worker_cap() {
    static std::size_t cap = 0;
    return cap;
}

inline std::size_t effective_workers(std::size_t n_items) {
    std::size_t cap = worker_cap();
    if (cap == 0) cap = std::thread::hardware_concurrency();
    if (cap == 0) cap = 1;
    return cap < n_items ? cap : n_items;
}

// Static round-robin partition; fn(i) must write only to slot i of its output,
// so parallel and serial execution produce identical results.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    std::size_t workers = effective_workers(n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace prunenet
