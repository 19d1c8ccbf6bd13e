#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace vortexline {

/// Worker count from an explicit request, else VORTEXLINE_THREADS, else 1.
inline unsigned resolve_threads(int requested = 0) {
  if (requested > 0) return static_cast<unsigned>(requested);
  if (const char* env = std::getenv("VORTEXLINE_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  return 1;
}

/// Runs body(i) for i in [0, n). Each index writes only its own slot, so
/// results do not depend on the thread count. The first exception (lowest
/// index) is rethrown after all workers join.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t err_index = n;
  std::exception_ptr err;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < threads; ++k) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

}  // namespace vortexline
