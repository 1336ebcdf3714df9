#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "plvm/types.hpp"

namespace plvm {

/// Worker count used when callers pass threads <= 0.
inline int default_threads()
{
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each task must
/// write only to its own output slot. The first exception is rethrown after
/// all workers finish.
template <typename Fn>
void parallel_for(Index n, int threads, Fn &&fn)
{
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<Index>(n, threads > 0 ? threads : default_threads()));
    if (workers <= 1) {
        for (Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<Index> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (Index i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    for (auto &t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace plvm
