#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace kdvstar {

/// KDVSTAR_THREADS, default 1.
inline int thread_count_from_env() {
    const char* s = std::getenv("KDVSTAR_THREADS");
    if (!s) return 1;
    const int n = std::atoi(s);
    return n >= 1 ? n : 1;
}

/// Runs fn(i) for i in [0, n) on up to `threads` threads. Results must be written
/// to per-index slots so output does not depend on scheduling.
template <class F>
void parallel_for(int n, int threads, F&& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!err) err = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace kdvstar
