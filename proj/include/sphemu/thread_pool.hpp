#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <thread>
#include <utility>
#include <vector>

namespace sphemu::detail {

/// Runs fn(lo, hi) over a static contiguous partition of [0, n) with up to
/// `threads` workers. The partition depends only on (n, threads), so writers
/// to disjoint slots produce identical results for any thread count, and each
/// worker can reuse scratch state across its whole range. The first exception
/// (by lowest worker index) is rethrown after the join.
template <class F>
void parallel_for(std::int64_t n, int threads, F&& fn) {
  if (threads < 1) threads = 1;
  if (n <= 0) return;
  if (threads == 1 || n == 1) {
    fn(std::int64_t{0}, n);
    return;
  }
  const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = n * w / workers;
    const std::int64_t hi = n * (w + 1) / workers;
    pool.emplace_back([&, w, lo, hi] {
      try {
        fn(lo, hi);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace sphemu::detail
