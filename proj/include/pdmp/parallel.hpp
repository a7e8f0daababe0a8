#pragma once

#include <cstddef>
#include <functional>

namespace pdmp {

// Worker count: PDMP_WORKERS if set, else hardware concurrency.
unsigned worker_count();

// Runs body(k) for k in [0, n) on the worker pool. Results must be written
// to slot k so the reduction order never depends on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace pdmp
