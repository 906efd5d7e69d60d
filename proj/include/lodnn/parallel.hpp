#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>
#include <type_traits>
#include <vector>

namespace lodnn {

/// Evaluates f(0), ..., f(count-1) on up to `workers` threads and returns
/// the results in index order. Work items are claimed dynamically, but every
/// result lands in its own slot, so the output never depends on scheduling.
/// If several items throw, the exception of the lowest index is rethrown.
template <class F>
auto parallel_map(int count, int workers, F&& f) -> std::vector<std::invoke_result_t<F&, int>> {
  using R = std::invoke_result_t<F&, int>;
  std::vector<R> results(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<int> next{0};
  auto run = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        results[i] = f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  int n = std::max(1, std::min(workers, count));
  if (n == 1) {
    run();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (int t = 0; t < n; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

}  // namespace lodnn
