#pragma once

#include <cstddef>
#include <functional>

namespace fracstep {

// Worker count for block-parallel loops: min(hardware, FRACSTEP_THREADS).
std::size_t worker_count();

// Runs fn(i) for i in [0, n). Work items are independent; results must be
// written to preallocated per-index slots so the outcome is identical for any
// worker count. Exceptions from workers are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace fracstep
