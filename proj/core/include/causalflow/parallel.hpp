#pragma once

#include <cstddef>
#include <functional>

namespace causalflow {

// Worker count: CAUSALFLOW_THREADS if set (>= 1), otherwise hardware
// concurrency.
std::size_t thread_count();

// Runs body(i) for i in [0, count). Work is split into contiguous blocks;
// callers that reduce results must do so by index, never by completion order.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace causalflow
