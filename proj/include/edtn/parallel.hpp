#pragma once

#include <cstddef>
#include <functional>

namespace edtn {

// Global worker count for loops over independent work items (DtN columns, probe
// samples). 0 or 1 means run inline. Each item writes only its own slot, so results
// are identical for every thread count; determinism never depends on this value.
void set_thread_count(int n);
int thread_count();

// Calls fn(i) for i in [begin, end). Items are distributed in fixed contiguous chunks.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

}  // namespace edtn
