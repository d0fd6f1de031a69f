#pragma once

#include <cstddef>
#include <functional>

namespace iterseg {

/// Worker count: hardware concurrency, capped by the ITERSEG_THREADS
/// environment variable when set to a positive integer.
std::size_t worker_count();

/// Runs body(i) for i in [0, count) on up to worker_count() threads. Each index
/// runs exactly once; callers that need ordered results write into slot i.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace iterseg
