#pragma once

#include <cstddef>
#include <functional>

namespace dfss {

// Worker cap from DFSS_THREADS (default: hardware concurrency, at least 1).
std::size_t worker_count();

// Calls fn(i) for every i in [0, n) across up to worker_count() threads.
// fn must only write to per-index state; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dfss
