#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace owmmd {

/// Thread count from OW_THREADS when set and positive, else `fallback`.
int threads_from_env(int fallback);

/// Run fn(i) for i in [0, count) on up to `threads` workers. Work is pulled
/// from a shared counter; callers write results into slot i, so the outcome
/// never depends on scheduling. The first exception (lowest index) is
/// rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr error;
    std::size_t error_index = count;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(workers, count);
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    pool.clear();  // join
    if (error) std::rethrow_exception(error);
}

}  // namespace owmmd
