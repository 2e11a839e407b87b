#pragma once

#include <cstddef>
#include <functional>

namespace mcvit {

/// Worker count: MCVIT_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
int worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. The first
/// exception thrown by any call is rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace mcvit
