#pragma once

#include <cstddef>
#include <functional>

namespace vlbias {

/// Runs body(begin, end) over contiguous chunks of [0, n), possibly on
/// several threads. Callers must ensure the result does not depend on the
/// chunking (independent writes, or order-independent reductions), so any
/// thread count produces identical output.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

unsigned effective_threads(unsigned requested);

}  // namespace vlbias
