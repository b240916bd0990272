#pragma once

#include <cstddef>
#include <functional>

namespace tscs {

/// Worker count: TSCS_THREADS if set and positive, else hardware concurrency.
std::size_t default_thread_count();

/// Calls fn(i) for i in [0, count) on up to `threads` workers. Indices are
/// claimed dynamically; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)> &fn);

} // namespace tscs
