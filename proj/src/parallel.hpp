#pragma once

#include <cstddef>
#include <functional>

namespace npad {

// Worker cap used by every parallel loop in the library. Defaults to 1.
void set_max_threads(int threads);
int max_threads();

// Runs fn(i) for i in [0, n). Iterations are split into contiguous chunks,
// one per worker; fn must only write to state owned by index i so results do
// not depend on the worker count. The first exception thrown is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace npad
