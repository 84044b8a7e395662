#include "mkd/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace mkd {

namespace {
int g_max_threads = 0;  // 0 = unresolved, use hardware concurrency

int resolve_threads() {
  if (g_max_threads > 0) return g_max_threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}
}  // namespace

int max_threads() { return resolve_threads(); }

void set_max_threads(int n) { g_max_threads = n < 0 ? 0 : n; }

void parallel_blocks(
    std::size_t count, std::size_t block_size,
    const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  if (block_size == 0) block_size = 1;
  const std::size_t nblocks = (count + block_size - 1) / block_size;
  const int threads =
      std::min<std::size_t>(static_cast<std::size_t>(resolve_threads()), nblocks);

  auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    const std::size_t end = std::min(begin + block_size, count);
    fn(b, begin, end);
  };

  if (threads <= 1) {
    for (std::size_t b = 0; b < nblocks; ++b) run_block(b);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t b = next.fetch_add(1);
        if (b >= nblocks) break;
        run_block(b);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace mkd
