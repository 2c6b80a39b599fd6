#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "types.hpp"

namespace tetfit
{
    // Process-wide worker count used by the data-parallel kernels. Every kernel
    // writes into per-item slots and reduces sequentially afterwards, so results
    // do not depend on this value.
    int worker_count();
    void set_worker_count(int workers);

    // Runs fn(begin, end) over contiguous static chunks of [0, n).
    template <typename Fn>
    void parallel_for(Index n, Fn && fn, Index min_chunk = 1024)
    {
        if (n <= 0)
        {
            return;
        }
        const Index workers = std::min<Index>(worker_count(), std::max<Index>(1, n / std::max<Index>(1, min_chunk)));
        if (workers <= 1)
        {
            fn(Index {0}, n);
            return;
        }

        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        const Index chunk = (n + workers - 1) / workers;
        for (Index w = 0; w < workers; ++w)
        {
            const Index begin = w * chunk;
            const Index end   = std::min(n, begin + chunk);
            if (begin >= end)
            {
                break;
            }
            threads.emplace_back([&, begin, end]() {
                try
                {
                    fn(begin, end);
                }
                catch (...)
                {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure)
                    {
                        failure = std::current_exception();
                    }
                }
            });
        }
        for (auto & t : threads)
        {
            t.join();
        }
        if (failure)
        {
            std::rethrow_exception(failure);
        }
    }
}
