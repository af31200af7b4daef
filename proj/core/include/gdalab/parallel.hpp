#pragma once

#include <cstddef>
#include <functional>

namespace gdalab {

/// Worker count for sweeps and Monte-Carlo loops. Reads GDALAB_THREADS when
/// set to a positive integer, otherwise std::thread::hardware_concurrency().
std::size_t worker_count();

/// Runs body(i) for every i in [0, count) on up to `workers` threads. Tasks
/// are claimed from a shared counter, so callers must write results into
/// per-index slots and aggregate afterwards in index order. The first
/// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  std::size_t workers = worker_count());

}  // namespace gdalab
