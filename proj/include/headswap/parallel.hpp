#pragma once

#include <algorithm>
#include <exception>
#include <thread>
#include <vector>

namespace headswap {

/// Runs f(i) for i in [0, n) over `threads` workers in contiguous chunks.
/// Rethrows the first exception raised by any worker.
template <typename F>
void parallel_for(int n, int threads, F&& f)
{
    threads = std::clamp(threads, 1, std::max(1, n));
    if (threads == 1)
    {
        for (int i = 0; i < n; ++i)
            f(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int w = 0; w < threads; ++w)
    {
        pool.emplace_back([&, w] {
            const int begin = n * w / threads;
            const int end = n * (w + 1) / threads;
            try
            {
                for (int i = begin; i < end; ++i)
                    f(i);
            }
            catch (...)
            {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace headswap
