// Worker-pool helper for embarrassingly parallel jobs (sweep cells,
// ensemble seeds, MC samples). INVERSE_BASIN_THREADS caps the pool.

#pragma once

#include <cstddef>
#include <functional>

namespace invbasin {

std::size_t worker_count();

// Runs fn(0..n-1) across the worker pool. Each index must be independent;
// the first exception, if any, is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace invbasin
