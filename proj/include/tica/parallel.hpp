#pragma once

#include <functional>

namespace tica {

// Number of workers used when a caller passes threads <= 0.
int default_threads();

// Runs fn(begin, end) over contiguous blocks of [0, n) on up to `threads`
// workers. Blocks are assigned by ascending worker index, so callers that
// store per-item results and reduce them in index order get identical
// results for any thread count.
void parallel_for(long n, int threads,
                  const std::function<void(long, long)>& fn);

}  // namespace tica
