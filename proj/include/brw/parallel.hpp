#pragma once

// Replica-parallel execution with a pinned reduction order. Replicas own
// disjoint rng streams keyed by (seed, stream id); partials are produced per
// fixed-size chunk and folded by chunk index, so results are byte-identical
// for any worker count.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <thread>
#include <vector>

#include "brw/rng.hpp"

namespace brw {

inline int default_workers() {
  if (const char* env = std::getenv("BRW_LAB_WORKERS")) {
    int w = std::atoi(env);
    if (w > 0) return w;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

template <typename Partial, typename Fn>
std::vector<Partial> run_chunked(std::uint64_t n_replicas, int workers,
                                 std::uint64_t seed, std::uint64_t stream_offset,
                                 Fn&& fn, std::uint64_t chunk_size = 1024) {
  if (n_replicas == 0) return {};
  std::uint64_t n_chunks = (n_replicas + chunk_size - 1) / chunk_size;
  std::vector<Partial> partials(n_chunks);
  std::atomic<std::uint64_t> next{0};
  auto work = [&]() {
    for (;;) {
      std::uint64_t c = next.fetch_add(1, std::memory_order_relaxed);
      if (c >= n_chunks) break;
      Partial& part = partials[c];
      std::uint64_t lo = c * chunk_size;
      std::uint64_t hi = std::min<std::uint64_t>(n_replicas, lo + chunk_size);
      for (std::uint64_t r = lo; r < hi; ++r) {
        RngStream rng(seed, stream_offset + r);
        fn(r, rng, part);
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  return partials;
}

}  // namespace brw
