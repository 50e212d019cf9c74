#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace resolveq::detail
{

// Effective worker count: `requested` (0 = hardware), capped by the
// RESOLVEQ_THREADS environment variable when set.
inline int thread_budget(int requested)
{
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1)
        n = 1;
    if (const char *env = std::getenv("RESOLVEQ_THREADS"))
    {
        const int cap = std::atoi(env);
        if (cap >= 1)
            n = std::min(n, cap);
    }
    return n;
}

// Runs f(i) for i in [0, count). Work is partitioned into contiguous chunks;
// each index is visited exactly once, so results written to slot i are
// independent of the thread count.
template <typename F>
void parallel_for(int count, int threads, F &&f)
{
    threads = std::min(thread_budget(threads), std::max(count, 1));
    if (threads <= 1 || count <= 1)
    {
        for (int i = 0; i < count; ++i)
            f(i);
        return;
    }

    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    const int chunk = (count + threads - 1) / threads;
    for (int t = 0; t < threads; ++t)
    {
        const int begin = t * chunk;
        const int end = std::min(count, begin + chunk);
        if (begin >= end)
            break;
        pool.emplace_back([&, begin, end]() {
            try
            {
                for (int i = begin; i < end; ++i)
                    f(i);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error)
                    first_error = std::current_exception();
            }
        });
    }
    for (auto &th : pool)
        th.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

} // namespace resolveq::detail
