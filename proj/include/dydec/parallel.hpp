#pragma once

#include <cstddef>
#include <functional>

namespace dydec {

/// Worker cap: DYDEC_THREADS if set and positive, else hardware concurrency.
int thread_count();

/// Runs fn(i) for i in [0, n). Work is split into contiguous chunks; callers write
/// per-index results and reduce them afterwards in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dydec
