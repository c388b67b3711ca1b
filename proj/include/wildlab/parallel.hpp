#pragma once

#include <cstddef>
#include <functional>

namespace wildlab {

// Worker count: WILDLAB_THREADS if set (>= 1), else hardware concurrency.
int thread_count();

// Runs body(i) for i in [0, n) across worker threads. Each index is handled
// exactly once; results must be written to per-index slots so the outcome
// does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace wildlab
