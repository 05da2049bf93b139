#pragma once

#include <cstddef>
#include <functional>

namespace relprop {

/// Resolves a user-facing thread count: 0 means "all hardware threads".
std::size_t resolve_threads(std::size_t requested);

/// Runs body(i) for i in [0, count) on up to `threads` workers. Indices are
/// handed out in contiguous blocks; callers write into pre-sized slots so the
/// result never depends on scheduling. The exception thrown for the lowest
/// failing index is rethrown on the calling thread.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace relprop
