// Exact enumeration and inequality verification on tiny instances.

#include <benchmark/benchmark.h>

#include "perclab/oracle.hpp"

using namespace perclab;

namespace {

TinyInstance ring(int n, double thr) {
  TinyInstance t;
  t.nv = n;
  for (int i = 0; i < n; ++i)
    t.edges.push_back(TinyEdge{i, (i + 1) % n, thr, EdgeClass::Bulk});
  return t;
}

void BM_exact_probability(benchmark::State& state) {
  const LatticeSpec spec = LatticeSpec::box(2, 2, 1, ClassRule::AxisDirection);
  const RegionGraph g = build_region_graph(spec, spec.full_region());
  const TinyInstance inst = TinyInstance::from_graph(g, ParamPoint(0.3, 0.6));
  const int origin = g.local_of(g.spec->vertex_index({0, 0}));
  std::vector<int> shell;
  for (i32 v = 0; v < g.vcount(); ++v)
    if (v != origin) shell.push_back(v);
  for (auto _ : state) {
    benchmark::DoNotOptimize(exact_probability(inst, [&](u32 cfg) {
      return config_connects_to_set(inst, cfg, origin, shell);
    }));
  }
  state.SetItemsProcessed(state.iterations() * (i64(1) << inst.ne()));
}
BENCHMARK(BM_exact_probability);

void BM_verify_fkg(benchmark::State& state) {
  const TinyInstance inst = ring(4, 0.45);
  const auto conn = [&](int a, int b) {
    return [&inst, a, b](u32 cfg) { return config_connects(inst, cfg, a, b); };
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(verify_fkg(inst, conn(0, 2), conn(1, 3)));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_verify_fkg);

void BM_verify_bk(benchmark::State& state) {
  const TinyInstance inst = ring(4, 0.45);
  const auto conn = [&](int a, int b) {
    return [&inst, a, b](u32 cfg) { return config_connects(inst, cfg, a, b); };
  };
  for (auto _ : state) {
    benchmark::DoNotOptimize(verify_bk(inst, conn(0, 2), conn(1, 3)));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_verify_bk);

void BM_all_monotone_events(benchmark::State& state) {
  const int ne = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(all_monotone_events(ne));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_all_monotone_events)->Arg(3)->Arg(4)->Arg(5);

}  // namespace

BENCHMARK_MAIN();
