#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace exlab {

inline unsigned default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

/// Evaluates f(0..count-1) on up to `workers` threads. Results keep index
/// order; if any call throws, the exception of the lowest failing index is
/// rethrown after all workers finish.
template <class F>
auto parallel_map(std::size_t count, F&& f, unsigned workers = 0) {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        results[i] = f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::min<std::size_t>(workers == 0 ? default_workers() : workers, std::max<std::size_t>(count, 1));
  if (n <= 1) {
    body();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n);
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(body);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace exlab
