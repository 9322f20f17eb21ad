#pragma once

#include <cstddef>
#include <functional>

namespace volforge {

/// Worker cap: VOLFORGE_THREADS when set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t thread_budget();

/// Runs body(0..n-1) on up to thread_budget() threads. Each index runs
/// exactly once; the first exception (lowest index) is rethrown after all
/// workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace volforge
