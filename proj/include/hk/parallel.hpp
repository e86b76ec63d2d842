#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "hk/error.hpp"

namespace hk {

/// Environment variable consulted for the default worker count.
inline constexpr const char* kThreadsEnv = "HK_THREADS";

namespace detail {
inline std::atomic<int>& thread_setting() {
    static std::atomic<int> n{0};
    return n;
}
}  // namespace detail

inline void set_thread_count(int n) {
    if (n < 0) throw ArgumentError("thread count must be nonnegative");
    detail::thread_setting() = n;
}

/// Explicit setting, else $HK_THREADS, else the hardware count.
inline int thread_count() {
    if (int n = detail::thread_setting(); n > 0) return n;
    if (const char* env = std::getenv(kThreadsEnv)) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Calls fn(i) for i in [begin, end) on up to thread_count() workers; rethrows the first error.
template <class Fn>
void parallel_for(long begin, long end, Fn&& fn) {
    const long n = end - begin;
    if (n <= 0) return;
    const int workers = static_cast<int>(std::min<long>(thread_count(), n));
    if (workers <= 1) {
        for (long i = begin; i < end; ++i) fn(i);
        return;
    }
    std::atomic<long> next{begin};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (long i = next++; i < end; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = end;
                }
            }
        });
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace hk
