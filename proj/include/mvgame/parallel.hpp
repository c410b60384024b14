#ifndef MVGAME_PARALLEL_HPP
#define MVGAME_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mvg {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
    static std::atomic<unsigned> n{0};
    return n;
}
}  // namespace detail

// 0 means hardware concurrency.
inline void set_threads(unsigned n) { detail::thread_setting() = n; }

inline unsigned thread_count() {
    unsigned n = detail::thread_setting();
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    return n;
}

// Runs fn(task) for task in [0, n). Callers write into per-task slots and
// reduce in task order, so results do not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    unsigned nt = std::min<std::size_t>(thread_count(), n);
    if (nt <= 1) {
        for (std::size_t k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto work = [&] {
        for (;;) {
            std::size_t k = next.fetch_add(1);
            if (k >= n) return;
            try {
                fn(k);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!err) err = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < nt; ++w) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

}  // namespace mvg

#endif
