#pragma once

#include <cstddef>
#include <functional>

namespace lemmse {

/// Runs task(i) for every i in [0, count) on up to `threads` workers. Tasks are
/// pulled from a shared counter, so callers must make each task's result
/// independent of which worker runs it. Exceptions are rethrown on the caller.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)> &task);

/// Worker count to use when the caller passes threads <= 0.
int default_thread_count();

} // namespace lemmse
