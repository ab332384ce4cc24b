#include "vlbias/parallel.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace vlbias {

unsigned effective_threads(unsigned requested) {
  if (requested == 0) requested = 1;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  return std::min(requested, hw);
}

void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  threads = effective_threads(threads);
  if (n == 0) return;
  if (threads <= 1 || n < 2 * threads) {
    body(0, n);
    return;
  }
  const std::size_t chunk = (n + threads - 1) / threads;
  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (unsigned t = 1; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    if (begin >= n) break;
    const std::size_t end = std::min(n, begin + chunk);
    pool.emplace_back([&body, begin, end] { body(begin, end); });
  }
  body(0, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace vlbias
