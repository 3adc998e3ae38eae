#pragma once

#include <cstddef>
#include <functional>

namespace pcbd {

/// Worker cap: PCBD_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker
/// and results must be written by index, so output never depends on the
/// schedule. Exceptions from workers are rethrown (first index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Training reallocates multi-megabyte tensors every step. Keeping freed
/// blocks in the heap instead of returning them to the OS avoids paying the
/// page faults again each time. No-op outside glibc.
void tune_allocator();

}  // namespace pcbd
