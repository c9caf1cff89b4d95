#pragma once

#include <cstddef>
#include <functional>

namespace loopsoup {

/// Worker count: LOOPSOUP_THREADS if set and positive, else hardware
/// concurrency (at least 1).
unsigned default_thread_count();

/// Runs body(i) for i in [0, count). Work is split into contiguous chunks,
/// so callers that write body's results into slot i get a result that does
/// not depend on the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body,
                  unsigned threads = 0);

}  // namespace loopsoup
