#include "hdmr/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace hdmr {
namespace {

int initial_worker_count() {
  if (const char* env = std::getenv("HDMR_THREADS")) {
    try {
      int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (...) {
    }
  }
  return 1;
}

std::atomic<int>& workers() {
  static std::atomic<int> n{initial_worker_count()};
  return n;
}

}  // namespace

int worker_count() { return workers().load(); }

void set_worker_count(int n) { workers().store(std::max(1, n)); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto nw = static_cast<std::size_t>(worker_count());
  if (nw <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t chunks = std::min(nw, n);
  const std::size_t per = (n + chunks - 1) / chunks;
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = c * per;
    const std::size_t end = std::min(n, begin + per);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      try {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace hdmr
