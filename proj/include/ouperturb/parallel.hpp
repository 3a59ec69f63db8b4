#pragma once

#include <atomic>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace oup {

/// Worker count for block-parallel loops. OUPERTURB_WORKERS overrides;
/// otherwise hardware concurrency. Results never depend on this value:
/// work is split into fixed blocks and reduced in block order.
inline int worker_count() {
    if (const char* env = std::getenv("OUPERTURB_WORKERS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(block_index) for block_index in [0, n_blocks), distributing blocks
/// over workers. fn must write only to per-block storage.
template <class Fn>
inline void parallel_for_blocks(int n_blocks, Fn&& fn) {
    const int workers = std::min(worker_count(), n_blocks);
    if (workers <= 1) {
        for (int b = 0; b < n_blocks; ++b) fn(b);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (int b = next.fetch_add(1); b < n_blocks; b = next.fetch_add(1)) fn(b);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace oup
