#pragma once

#include <cstddef>
#include <functional>

namespace uasabi {

/// Worker count: `requested` if positive, else UASABI_WORKERS, else the
/// number of hardware threads.
int resolve_workers(int requested = 0);

/// Runs fn(0..n-1) on up to `workers` threads. Tasks must write to disjoint
/// outputs; the first exception thrown by any task is rethrown after join.
void parallel_for(std::size_t n, int workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace uasabi
