#pragma once

#include <cstddef>
#include <functional>

namespace levyshell {

// Hardware parallelism, at least 1.
unsigned default_worker_count();

// Runs body(i) for i in [0, count) on up to `workers` threads (0 means
// default_worker_count()). Work items are claimed dynamically, so callers
// must write results into per-index slots and reduce afterwards in index
// order. The first exception thrown by any body is rethrown here.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body);

}  // namespace levyshell
