#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace voxenc {

// Deterministic block-parallel loop. Work is cut into fixed-size blocks that
// depend only on (n, block_size), never on the thread count, and each block
// writes only its own outputs. Numerical results are therefore identical for
// any n_threads, including 1.
template <class Fn>
void parallel_blocks(std::size_t n, std::size_t block_size, int n_threads, Fn&& fn) {
  if (n == 0) return;
  if (block_size == 0) block_size = 1;
  const std::size_t n_blocks = (n + block_size - 1) / block_size;
  if (n_threads <= 1 || n_blocks == 1) {
    for (std::size_t b = 0; b < n_blocks; ++b) {
      const std::size_t begin = b * block_size;
      fn(begin, std::min(begin + block_size, n));
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_blocks) return;
      const std::size_t begin = b * block_size;
      try {
        fn(begin, std::min(begin + block_size, n));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const int workers = static_cast<int>(std::min<std::size_t>(n_blocks, static_cast<std::size_t>(n_threads)));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace voxenc
