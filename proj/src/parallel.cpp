#include "tica/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace tica {

int default_threads() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

void parallel_for(long n, int threads,
                  const std::function<void(long, long)>& fn) {
  if (n <= 0) return;
  if (threads <= 0) threads = default_threads();
  const long workers = std::min<long>(threads, n);
  if (workers <= 1) {
    fn(0, n);
    return;
  }
  const long chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (long w = 0; w < workers; ++w) {
    const long begin = w * chunk;
    const long end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace tica
