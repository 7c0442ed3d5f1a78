#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <thread>
#include <vector>

namespace msreg {

inline std::atomic<int>& detail_thread_count() {
  static std::atomic<int> count{1};
  return count;
}

inline void set_thread_count(int n) { detail_thread_count().store(n < 1 ? 1 : n); }
inline int thread_count() { return detail_thread_count().load(); }

// Runs fn(i) for i in [begin, end). With more than one thread the range is
// split into contiguous chunks; every index must write only its own outputs,
// so results are identical for any chunking.
template <class Fn>
void parallel_for(std::int64_t begin, std::int64_t end, Fn&& fn) {
  const std::int64_t n = end - begin;
  const int threads = thread_count();
  if (threads <= 1 || n < 2) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(n < threads ? n : threads);
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  std::exception_ptr first_error;
  std::atomic<bool> failed{false};
  for (int w = 0; w < workers; ++w) {
    const std::int64_t lo = begin + w * chunk;
    const std::int64_t hi = lo + chunk < end ? lo + chunk : end;
    pool.emplace_back([&, lo, hi]() {
      try {
        for (std::int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        bool expected = false;
        if (failed.compare_exchange_strong(expected, true)) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace msreg
