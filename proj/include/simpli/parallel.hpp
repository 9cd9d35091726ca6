#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace simpli {

namespace detail {
inline std::atomic<bool>& deterministic_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}

inline std::size_t env_thread_cap() {
    static const std::size_t cap = [] {
        const char* env = std::getenv("SIMPLI_THREADS");
        if (env == nullptr) return std::size_t{0};
        try {
            long v = std::stol(env);
            return v > 0 ? static_cast<std::size_t>(v) : std::size_t{1};
        } catch (...) {
            return std::size_t{0};
        }
    }();
    return cap;
}
}  // namespace detail

/// Deterministic mode pins every loop to a single thread in fixed order.
inline void set_deterministic(bool on) { detail::deterministic_flag().store(on); }
inline bool deterministic() { return detail::deterministic_flag().load(); }

/// Worker count honoring SIMPLI_THREADS and deterministic mode.
inline std::size_t thread_count() {
    if (deterministic()) return 1;
    std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::size_t cap = detail::env_thread_cap();
    return cap == 0 ? hw : std::min(hw, cap);
}

/// Static partition of [begin, end) across workers. `fn(i)` must only write
/// outputs owned by index i.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn, std::size_t min_chunk = 1) {
    if (end <= begin) return;
    const std::size_t n = end - begin;
    std::size_t workers = std::min(thread_count(), std::max<std::size_t>(1, n / std::max<std::size_t>(1, min_chunk)));
    if (workers <= 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 1; w < workers; ++w) {
        std::size_t lo = begin + w * chunk;
        std::size_t hi = std::min(end, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (std::size_t i = begin; i < std::min(end, begin + chunk); ++i) fn(i);
    for (auto& t : pool) t.join();
}

}  // namespace simpli
