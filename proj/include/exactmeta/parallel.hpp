#pragma once

#include <functional>

namespace exactmeta {

// Maximum worker count: EXACTMETA_THREADS if set, else hardware concurrency.
int max_threads();

// Runs fn(0..n-1), possibly on several threads.  Work items must write only
// to their own slot of any shared output so results are schedule-independent.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace exactmeta
