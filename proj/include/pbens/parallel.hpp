#pragma once

#include <cstddef>
#include <functional>

namespace pbens {

/// Runs body(i) for i in [0, count) on up to `threads` workers.
///
/// Work items must be independent; each index is processed exactly once and
/// results are identical to the sequential loop. If any body throws, the
/// exception from the lowest failing index is rethrown after all workers join.
void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& body);

/// Worker count used when a caller passes threads <= 0.
int default_thread_count();

}  // namespace pbens
