#pragma once

#include <cstddef>
#include <functional>

namespace adarank {

// Runs fn(0) .. fn(count-1) on up to `workers` threads. Each index is
// processed exactly once and results must be written to per-index slots, so
// the outcome is identical to the serial loop regardless of worker count.
// workers <= 1 runs inline. The first exception thrown by any index is
// rethrown after all threads join.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace adarank
