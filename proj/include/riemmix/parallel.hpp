#pragma once

#include <cstddef>
#include <functional>

namespace riemmix {

/// Worker thread cap: RIEMMIX_THREADS if set to a positive integer, else the
/// hardware concurrency.
unsigned worker_threads();

/// Number of fixed-size chunks covering [0, n).
inline std::size_t chunk_count(std::size_t n, std::size_t chunk) { return chunk == 0 ? 0 : (n + chunk - 1) / chunk; }

/// Calls fn(chunk_index, begin, end) for every chunk of [0, n), possibly
/// concurrently. Chunk boundaries depend only on n and chunk size, so callers
/// that reduce per-chunk results in index order get the same answer for any
/// thread count.
void for_each_chunk(std::size_t n, std::size_t chunk,
                    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace riemmix
