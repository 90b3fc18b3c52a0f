#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"

namespace spdcinv {

/// Worker cap from SPDCINV_WORKERS, else the hardware thread count.
inline unsigned worker_count() {
    if (const char* env = std::getenv("SPDCINV_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ConfigError("SPDCINV_WORKERS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(task, worker) for task in [0, n). Tasks are claimed dynamically, so
/// callers must make results depend only on the task index, never on the
/// worker. The first exception thrown by any task is rethrown.
template <class Fn>
void parallel_for(std::size_t n, unsigned workers, Fn&& fn) {
    workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t t = 0; t < n; ++t) fn(t, 0u);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&](unsigned w) {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= n) return;
            try {
                fn(t, w);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(n);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body, w);
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

} // namespace spdcinv
