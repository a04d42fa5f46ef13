// SPDX-License-Identifier: Apache-2.0
//
// difflink: simulation and training of diffractive metasurface transceivers
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef DIFFLINK_PARALLEL_HPP
#define DIFFLINK_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace difflink
{

namespace detail
{
inline std::atomic<std::size_t> &thread_setting()
{
    static std::atomic<std::size_t> n = [] {
        if (const char *env = std::getenv("DIFFLINK_THREADS"))
        {
            try
            {
                const long v = std::stol(env);
                if (v > 0)
                    return static_cast<std::size_t>(v);
            }
            catch (const std::exception &)
            {
            }
        }
        return std::size_t{1};
    }();
    return n;
}
} // namespace detail

/// Worker count used by parallel_for. Defaults to $DIFFLINK_THREADS, else 1.
inline std::size_t thread_count() { return detail::thread_setting().load(); }
inline void set_thread_count(std::size_t n) { detail::thread_setting().store(std::max<std::size_t>(n, 1)); }

/// Calls fn(i) for i in [0, n). Work is split into contiguous static chunks, so any
/// per-index output is independent of the thread count. The first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, Fn &&fn)
{
    const std::size_t workers = std::min(thread_count(), n);
    if (workers <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::exception_ptr err;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
    {
        const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
        pool.emplace_back([&, lo, hi] {
            try
            {
                for (std::size_t i = lo; i < hi; ++i)
                    fn(i);
            }
            catch (...)
            {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!err)
                    err = std::current_exception();
            }
        });
    }
    for (auto &t : pool)
        t.join();
    if (err)
        std::rethrow_exception(err);
}

} // namespace difflink

#endif
