#pragma once
// Deterministic parallel Monte Carlo driver.
//
// Samples are pure functions of (master seed, sample index), so any thread
// may compute any sample. Work is split into fixed-size chunks of
// consecutive sample indices; threads claim chunks dynamically, each chunk
// accumulates into its own partial, and the partials are merged serially in
// chunk order. The reduction therefore performs the exact same floating
// point operations in the exact same order for every worker count: results
// are byte-identical for 1, 4, or 16 workers.

#include <atomic>
#include <thread>
#include <vector>

#include "perclab/common.hpp"
#include "perclab/records.hpp"

namespace perclab {

struct McOptions {
  int workers = 1;
  i64 chunk = 256;  // samples per chunk; any positive value is valid
};

// Generic driver. Work(i64 begin, i64 end, Partial& out) must accumulate
// samples [begin, end) into `out` (a fresh default-constructed Partial);
// Partial must provide merge(const Partial&).
template <class Partial, class Work>
Partial run_mc_partials(i64 n_samples, const McOptions& opt, Work work) {
  PERCLAB_REQUIRE(n_samples >= 0, "sample count must be nonnegative");
  PERCLAB_REQUIRE(opt.workers >= 1, "worker count must be >= 1");
  PERCLAB_REQUIRE(opt.chunk >= 1, "chunk size must be >= 1");
  const i64 chunks = (n_samples + opt.chunk - 1) / opt.chunk;
  std::vector<Partial> partials(static_cast<size_t>(chunks));

  auto run_range = [&](i64 c) {
    i64 begin = c * opt.chunk;
    i64 end = std::min(n_samples, begin + opt.chunk);
    work(begin, end, partials[static_cast<size_t>(c)]);
  };

  int nw = static_cast<int>(std::min<i64>(opt.workers, chunks));
  if (nw <= 1) {
    for (i64 c = 0; c < chunks; ++c) run_range(c);
  } else {
    std::atomic<i64> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(nw));
    for (int w = 0; w < nw; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          i64 c = next.fetch_add(1, std::memory_order_relaxed);
          if (c >= chunks) return;
          run_range(c);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  Partial total;
  for (i64 c = 0; c < chunks; ++c)
    total.merge(partials[static_cast<size_t>(c)]);
  return total;
}

// Mean/stderr of a per-sample score. Score(i64 sample_index) -> double.
template <class Score>
Accumulator run_mc(i64 n_samples, const McOptions& opt, Score score) {
  return run_mc_partials<Accumulator>(
      n_samples, opt, [&](i64 begin, i64 end, Accumulator& acc) {
        for (i64 i = begin; i < end; ++i) acc.add(score(i));
      });
}

}  // namespace perclab
