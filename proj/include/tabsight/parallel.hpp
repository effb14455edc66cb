#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace tabsight {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Work is split into
/// contiguous ranges; results must be written to per-index slots.
template <class F>
void parallel_for(int n, int workers, F&& fn) {
    if (workers <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int w = std::min(workers, n);
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(w));
    for (int k = 0; k < w; ++k) {
        threads.emplace_back([&, k] {
            try {
                for (int i = k * n / w; i < (k + 1) * n / w; ++i) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(k)] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace tabsight
