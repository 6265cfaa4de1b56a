// Throughput of the counter-based field and of threshold resolution.

#include <benchmark/benchmark.h>

#include "perclab/clusters.hpp"
#include "perclab/field.hpp"

using namespace perclab;

namespace {

void BM_uniform_draw(benchmark::State& state) {
  const UniformField f(12345, 7);
  i64 slot = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(f.u(slot));
    slot = (slot + 1) & 0xFFFFF;
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_uniform_draw);

void BM_fill_open(benchmark::State& state) {
  const i64 r = state.range(0);
  const LatticeSpec spec = LatticeSpec::box(3, 2, r);
  const RegionGraph g = build_region_graph(spec, spec.full_region());
  const ParamPoint pt(0.2488, 0.5);
  std::vector<unsigned char> open;
  u64 stream = 0;
  for (auto _ : state) {
    const UniformField f(99, stream++);
    fill_open(g, f, pt, open);
    benchmark::DoNotOptimize(open.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<i64>(g.edges.size()));
}
BENCHMARK(BM_fill_open)->Arg(4)->Arg(8)->Arg(16)->Arg(32);

}  // namespace

BENCHMARK_MAIN();
