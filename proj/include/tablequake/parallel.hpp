#pragma once

#include <cstddef>
#include <functional>

namespace tablequake {

// Worker count: TABLEQUAKE_THREADS when set to a positive integer, otherwise
// the hardware concurrency (at least 1).
std::size_t thread_budget();

// Calls fn(i) for every i in [0, n), spread over up to thread_budget()
// threads. Each index runs exactly once; the first exception is rethrown
// after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace tablequake
