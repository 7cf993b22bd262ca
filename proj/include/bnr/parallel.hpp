#pragma once

#include <cstddef>
#include <functional>

namespace bnr {

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Exceptions from body are rethrown
/// (the first one, by index) after all workers finish.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

}  // namespace bnr
