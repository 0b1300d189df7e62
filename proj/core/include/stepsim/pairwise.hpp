#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

#include "stepsim/corpus.hpp"

namespace stepsim {

/// Default worker count: hardware concurrency, at least 1.
inline unsigned default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

/// Evaluates score(i, j) for every pair i < j of n items into condensed
/// order. Each worker owns a contiguous block of slots, so the output does
/// not depend on the thread count. If several workers throw, the exception of
/// the lowest block is rethrown.
template <typename Score>
std::vector<double> pairwise_condensed(std::size_t n, Score&& score, unsigned threads = 0) {
  const std::size_t total = corpus::pair_count(n);
  std::vector<double> out(total);
  if (total == 0) return out;
  if (threads == 0) threads = default_threads();
  const std::size_t workers = std::min<std::size_t>(threads, total);
  const std::size_t block = (total + workers - 1) / workers;

  auto run = [&](std::size_t begin, std::size_t end) {
    auto [i, j] = corpus::condensed_pair(begin, n);
    for (std::size_t k = begin; k < end; ++k) {
      out[k] = score(i, j);
      if (++j == n) {
        ++i;
        j = i + 1;
      }
    }
  };

  if (workers == 1) {
    run(0, total);
    return out;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = w * block;
    const std::size_t end = std::min(total, begin + block);
    pool.emplace_back([&, w, begin, end] {
      try {
        if (begin < end) run(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace stepsim
