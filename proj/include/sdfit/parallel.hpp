#pragma once

#include <cstddef>
#include <functional>

namespace sdfit {

/// Global worker-thread budget for chunked loops (>= 1).
void set_thread_count(int n);
int thread_count();

/// Splits [0, count) into fixed-size chunks and runs fn(begin, end, chunk_index)
/// for each. Chunk boundaries depend only on count and chunk_size, never on the
/// thread budget, so callers that write per-chunk results and reduce them in
/// chunk order get answers independent of the number of threads.
void parallel_chunks(std::size_t count, std::size_t chunk_size,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

/// Number of chunks parallel_chunks will produce for the given sizes.
std::size_t chunk_count(std::size_t count, std::size_t chunk_size);

}  // namespace sdfit
