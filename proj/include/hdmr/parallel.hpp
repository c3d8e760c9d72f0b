#pragma once

#include <cstddef>
#include <functional>

namespace hdmr {

/// Worker count used by parallel_for. Defaults to the HDMR_THREADS
/// environment variable when set, otherwise 1.
int worker_count();
void set_worker_count(int n);

/// Calls fn(i) for i in [0, n) using static contiguous chunks. Each index is
/// processed exactly once and fn must only write to slots owned by i, so the
/// result never depends on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace hdmr
