#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace rmfgl {

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Splits [0, n) into fixed blocks of `block` items and evaluates
/// fn(first, last) -> R for each on up to `threads` workers. Results come back
/// in block order, so any in-order merge is independent of the thread count.
template <class R, class F>
std::vector<R> parallel_blocks(std::int64_t n, std::int64_t block, int threads, F&& fn) {
  block = std::max<std::int64_t>(1, block);
  const std::int64_t nblocks = (n + block - 1) / block;
  std::vector<R> results(static_cast<std::size_t>(nblocks));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nblocks));
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (std::int64_t b = next++; b < nblocks; b = next++) {
      try {
        results[b] = fn(b * block, std::min(n, (b + 1) * block));
      } catch (...) {
        errors[b] = std::current_exception();
      }
    }
  };
  const int nt = static_cast<int>(std::min<std::int64_t>(resolve_threads(threads), nblocks));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

/// Block size used by every Monte Carlo loop; part of the reproducibility
/// contract because floating-point sums are merged per block.
inline constexpr std::int64_t kPathBlock = 256;

}  // namespace rmfgl
