#pragma once

#include <cstddef>
#include <functional>

namespace layoutflow {

/// Worker count: LAYOUTFLOW_THREADS when set (>= 1), else hardware concurrency.
int worker_count();

/// Splits [0, n) into `chunks` contiguous ranges and runs fn(chunk, begin, end)
/// for each on `workers` threads (default: one per chunk). Chunk boundaries
/// depend only on n and chunks, so per-chunk results reduced in a fixed order
/// do not depend on the thread count.
void parallel_chunks(std::size_t n, int chunks,
                     const std::function<void(int chunk, std::size_t begin, std::size_t end)>& fn,
                     int workers = 0);

} // namespace layoutflow
