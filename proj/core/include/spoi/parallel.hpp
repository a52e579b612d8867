#pragma once

#include <cstddef>
#include <functional>

namespace spoi {

/// Worker cap: SPOI_THREADS if set (>=1), otherwise hardware concurrency.
std::size_t max_threads();

/// Runs fn(begin, end) over disjoint chunks of [0, n). Each chunk writes to
/// disjoint output rows, so results do not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace spoi
