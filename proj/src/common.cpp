// Copyright Contributors to the bevfield Project
// SPDX-License-Identifier: Apache-2.0

#include "bevfield/common.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace bevfield {

namespace {
std::atomic<int> gThreadCount{0};
}

void
set_thread_count(int n) {
    gThreadCount.store(std::max(0, n));
}

int
thread_count() {
    const int n = gThreadCount.load();
    if (n > 0) {
        return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void
parallel_for(int begin, int end, const std::function<void(int)> &fn) {
    const int count   = end - begin;
    const int workers = std::min(thread_count(), count);
    if (workers <= 1) {
        for (int i = begin; i < end; ++i) {
            fn(i);
        }
        return;
    }

    std::atomic<int> next{begin};
    std::exception_ptr firstError;
    std::mutex errorMutex;
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < end; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(errorMutex);
                if (!firstError) {
                    firstError = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(workers - 1);
    for (int t = 1; t < workers; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    pool.clear();
    if (firstError) {
        std::rethrow_exception(firstError);
    }
}

} // namespace bevfield
