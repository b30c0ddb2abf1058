#pragma once

#include <cstddef>
#include <functional>

namespace kinlub {

/// Runs body(i) for i in [0, count) on up to `threads` worker threads.
/// Indices are handed out dynamically; the first exception thrown by any
/// worker is rethrown on the calling thread after all workers stop.
/// threads <= 1 runs inline.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace kinlub
