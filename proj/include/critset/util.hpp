// Small shared utilities: deterministic parallel loops, order-stable
// summation, hashing.  Everything here is scheduling-independent so results
// do not change with the thread count.
#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string_view>
#include <thread>
#include <vector>

namespace critset {

inline unsigned& max_threads_slot() {
  static unsigned v = std::thread::hardware_concurrency() ? std::thread::hardware_concurrency() : 1u;
  return v;
}

inline unsigned max_threads() { return max_threads_slot(); }
inline void set_max_threads(unsigned n) { max_threads_slot() = n ? n : 1u; }

// Runs body(i) for i in [0, n).  Work is chunked dynamically but each index is
// visited exactly once; callers must write results into per-index slots so the
// outcome is independent of scheduling.  The first exception thrown by any
// worker is rethrown in the calling thread.
template <class F>
void parallel_for(std::int64_t n, F&& body, std::int64_t grain = 64) {
  if (n <= 0) return;
  if (grain < 1) grain = 1;
  const std::int64_t chunks = (n + grain - 1) / grain;
  unsigned nt = static_cast<unsigned>(std::min<std::int64_t>(max_threads(), chunks));
  if (nt <= 1) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex err_mtx;
  std::exception_ptr err;
  auto work = [&]() {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::int64_t begin = next.fetch_add(grain, std::memory_order_relaxed);
      if (begin >= n) return;
      const std::int64_t end = std::min(n, begin + grain);
      try {
        for (std::int64_t i = begin; i < end; ++i) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mtx);
        if (!err) err = std::current_exception();
        failed.store(true, std::memory_order_relaxed);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(nt - 1);
  for (unsigned t = 0; t + 1 < nt; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// Pairwise summation over a fixed index order.  Stable against re-chunking:
// the tree depends only on the vector contents, not on who produced them.
inline double pairwise_sum(const std::vector<double>& v, std::size_t lo, std::size_t hi) {
  const std::size_t n = hi - lo;
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += v[i];
    return s;
  }
  const std::size_t mid = lo + n / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v, 0, v.size()); }

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// SplitMix-style mixer for deriving per-task seeds from one master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace critset
