#ifndef TRIAGE_BENCH_HPP
#define TRIAGE_BENCH_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "triage/bundle.hpp"

namespace triage {

struct BenchLevel {
  unsigned threads = 1;
  std::uint64_t documents = 0;
  double seconds = 0.0;
  double docs_per_second = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
};

inline double percentile_ms(std::vector<double>& sorted_ms, double q) {
  if (sorted_ms.empty()) return 0.0;
  const auto rank = static_cast<std::size_t>(q * static_cast<double>(sorted_ms.size() - 1) + 0.5);
  return sorted_ms[std::min(rank, sorted_ms.size() - 1)];
}

// Classifies (tokenize + transform + predict) documents from `texts` on
// `threads` workers until `duration` elapses. Each worker walks the corpus
// cyclically from its own offset.
inline BenchLevel bench_throughput(const ModelBundle& model, std::span<const std::string> texts, unsigned threads,
                                   std::chrono::duration<double> duration) {
  if (texts.empty()) throw InvalidArgument("bench corpus is empty");
  threads = std::max(threads, 1u);
  using clock = std::chrono::steady_clock;
  std::vector<std::vector<double>> latencies(threads);

  const auto start = clock::now();
  const auto deadline = start + std::chrono::duration_cast<clock::duration>(duration);
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        std::size_t i = (texts.size() * t) / threads;
        auto& lat = latencies[t];
        for (;;) {
          const auto t0 = clock::now();
          if (t0 >= deadline) break;
          static_cast<void>(model.predict(texts[i]));
          lat.push_back(std::chrono::duration<double, std::milli>(clock::now() - t0).count());
          i = (i + 1) % texts.size();
        }
      });
    }
  }
  const double elapsed = std::chrono::duration<double>(clock::now() - start).count();

  std::vector<double> all;
  for (auto& l : latencies) all.insert(all.end(), l.begin(), l.end());
  std::sort(all.begin(), all.end());
  BenchLevel level;
  level.threads = threads;
  level.documents = all.size();
  level.seconds = elapsed;
  level.docs_per_second = elapsed > 0.0 ? static_cast<double>(all.size()) / elapsed : 0.0;
  level.p50_ms = percentile_ms(all, 0.50);
  level.p99_ms = percentile_ms(all, 0.99);
  return level;
}

}  // namespace triage

#endif  // TRIAGE_BENCH_HPP
