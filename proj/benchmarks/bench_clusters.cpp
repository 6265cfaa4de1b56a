// Cluster construction: union-find forests, spanning counts, trifurcations.

#include <benchmark/benchmark.h>

#include "perclab/clusters.hpp"
#include "perclab/field.hpp"

using namespace perclab;

namespace {

void BM_build_forest(benchmark::State& state) {
  const i64 r = state.range(0);
  const LatticeSpec spec = LatticeSpec::box(3, 2, r);
  const RegionGraph g = build_region_graph(spec, spec.full_region());
  const ParamPoint pt(0.2488, 0.5);
  std::vector<unsigned char> open;
  ClusterForest forest;
  u64 stream = 0;
  for (auto _ : state) {
    const UniformField f(7, stream++);
    fill_open(g, f, pt, open);
    build_forest(g, open, forest);
    benchmark::DoNotOptimize(forest.parent.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<i64>(g.edges.size()));
}
BENCHMARK(BM_build_forest)->Arg(4)->Arg(8)->Arg(16)->Arg(32);

void BM_spanning_count(benchmark::State& state) {
  const i64 L = state.range(0);
  const LatticeSpec spec = LatticeSpec::slab(3, 2, L, (L - 1) / 2);
  const RegionGraph g = build_region_graph(spec, spec.full_region());
  const ParamPoint pt(0.2488, 0.35);
  std::vector<unsigned char> open;
  ClusterForest forest;
  u64 stream = 0;
  for (auto _ : state) {
    const UniformField f(11, stream++);
    fill_open(g, f, pt, open);
    build_forest(g, open, forest);
    benchmark::DoNotOptimize(count_spanning_clusters(g, forest, 0, 1));
  }
  state.SetItemsProcessed(state.iterations() * g.vcount());
}
BENCHMARK(BM_spanning_count)->Arg(8)->Arg(16)->Arg(32);

void BM_trifurcations(benchmark::State& state) {
  const i64 r = state.range(0);
  const LatticeSpec spec = LatticeSpec::box(3, 2, r);
  const RegionGraph g = build_region_graph(spec, spec.full_region());
  const ParamPoint pt(0.12, 0.55);
  std::vector<unsigned char> open;
  TrifurcationScratch ws;
  u64 stream = 0;
  for (auto _ : state) {
    const UniformField f(13, stream++);
    fill_open(g, f, pt, open);
    benchmark::DoNotOptimize(count_trifurcations(g, open, ws));
  }
  state.SetItemsProcessed(state.iterations() * g.vcount());
}
BENCHMARK(BM_trifurcations)->Arg(8)->Arg(16);

}  // namespace

BENCHMARK_MAIN();
