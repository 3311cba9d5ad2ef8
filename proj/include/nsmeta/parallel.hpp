#pragma once

#include <cstddef>
#include <functional>

namespace nsmeta {

/// Number of worker threads for a request of `threads` (0 = hardware).
int resolve_threads(int threads);

/// Calls fn(i) for i in [0, n) on up to `threads` workers with a shared
/// atomic counter. Callers write results into per-index slots, so the output
/// does not depend on the thread count. The first exception is rethrown
/// after all workers finish.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace nsmeta
