#include "perclab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "perclab/engine.hpp"

namespace perclab {

namespace {

// Kahan-compensated sum.
struct Ksum {
  double s = 0.0, c = 0.0;
  void add(double x) {
    double y = x - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
};

}  // namespace

void TinyInstance::validate() const {
  PERCLAB_REQUIRE(nv >= 1, "instance needs at least one vertex");
  PERCLAB_REQUIRE(ne() <= 24, "enumeration capped at 24 edges");
  for (const TinyEdge& e : edges) {
    PERCLAB_REQUIRE(e.a >= 0 && e.a < nv && e.b >= 0 && e.b < nv,
                    "edge endpoint out of range");
    PERCLAB_REQUIRE(e.thr >= 0.0 && e.thr <= 1.0,
                    "edge threshold must lie in [0,1]");
  }
}

void TinyInstance::set_params(const ParamPoint& pt) {
  for (TinyEdge& e : edges) e.thr = threshold(e.cls, pt);
}

TinyInstance TinyInstance::from_graph(const RegionGraph& g,
                                      const ParamPoint& pt) {
  TinyInstance inst;
  inst.nv = g.vcount();
  inst.edges.reserve(g.edges.size());
  for (const RegionEdge& e : g.edges)
    inst.edges.push_back(TinyEdge{e.a, e.b, threshold(e.cls, pt), e.cls});
  inst.validate();
  return inst;
}

double exact_expected(const TinyInstance& inst, const ConfigFunctional& f) {
  inst.validate();
  const int ne = inst.ne();
  const u32 ncfg = 1u << ne;
  Ksum acc;
  for (u32 cfg = 0; cfg < ncfg; ++cfg) {
    double w = 1.0;
    for (int i = 0; i < ne; ++i)
      w *= (cfg >> i) & 1u ? inst.edges[i].thr : 1.0 - inst.edges[i].thr;
    if (w == 0.0) continue;
    double v = f(cfg);
    if (v != 0.0) acc.add(w * v);
  }
  return acc.s;
}

double exact_probability(const TinyInstance& inst, const ConfigEvent& event) {
  return exact_expected(inst,
                        [&](u32 cfg) { return event(cfg) ? 1.0 : 0.0; });
}

namespace {

double branch_rec(const TinyInstance& inst, const ConfigFunctional& f, int i,
                  u32 cfg, double w) {
  if (w == 0.0) return 0.0;
  if (i == inst.ne()) return w * f(cfg);
  // Closed branch first, then open: a different association order than the
  // flat product-weight loop.
  double lo = branch_rec(inst, f, i + 1, cfg, w * (1.0 - inst.edges[i].thr));
  double hi =
      branch_rec(inst, f, i + 1, cfg | (1u << i), w * inst.edges[i].thr);
  return lo + hi;
}

}  // namespace

double exact_expected_branching(const TinyInstance& inst,
                                const ConfigFunctional& f) {
  inst.validate();
  return branch_rec(inst, f, 0, 0u, 1.0);
}

namespace {

// Open-edge BFS from `a`; fills visited.
void config_bfs(const TinyInstance& inst, u32 cfg, int a,
                std::vector<unsigned char>& visited) {
  visited.assign(static_cast<size_t>(inst.nv), 0);
  std::vector<int> stack = {a};
  visited[static_cast<size_t>(a)] = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int i = 0; i < inst.ne(); ++i) {
      if (!((cfg >> i) & 1u)) continue;
      const TinyEdge& e = inst.edges[i];
      int w = -1;
      if (e.a == v) w = e.b;
      else if (e.b == v) w = e.a;
      if (w >= 0 && !visited[static_cast<size_t>(w)]) {
        visited[static_cast<size_t>(w)] = 1;
        stack.push_back(w);
      }
    }
  }
}

}  // namespace

bool config_connects(const TinyInstance& inst, u32 cfg, int a, int b) {
  if (a == b) return true;
  std::vector<unsigned char> visited;
  config_bfs(inst, cfg, a, visited);
  return visited[static_cast<size_t>(b)] != 0;
}

bool config_connects_to_set(const TinyInstance& inst, u32 cfg, int a,
                            const std::vector<int>& target) {
  std::vector<unsigned char> visited;
  config_bfs(inst, cfg, a, visited);
  for (int t : target)
    if (visited[static_cast<size_t>(t)]) return true;
  return false;
}

double config_cluster_size(const TinyInstance& inst, u32 cfg, int v) {
  std::vector<unsigned char> visited;
  config_bfs(inst, cfg, v, visited);
  return static_cast<double>(
      std::count(visited.begin(), visited.end(), static_cast<unsigned char>(1)));
}

bool event_is_increasing(const TinyInstance& inst, const ConfigEvent& event) {
  const int ne = inst.ne();
  const u32 ncfg = 1u << ne;
  for (u32 cfg = 0; cfg < ncfg; ++cfg) {
    if (!event(cfg)) continue;
    // Opening any closed edge must preserve the event.
    for (int i = 0; i < ne; ++i) {
      if ((cfg >> i) & 1u) continue;
      if (!event(cfg | (1u << i))) return false;
    }
  }
  return true;
}

InequalityReport verify_fkg(const TinyInstance& inst, const ConfigEvent& f,
                            const ConfigEvent& g) {
  inst.validate();
  InequalityReport rep;
  rep.inputs_monotone =
      event_is_increasing(inst, f) && event_is_increasing(inst, g);
  double ef = exact_probability(inst, f);
  double eg = exact_probability(inst, g);
  rep.lhs = exact_probability(inst, [&](u32 c) { return f(c) && g(c); });
  rep.rhs = ef * eg;
  rep.holds = rep.lhs >= rep.rhs - 1e-12;
  return rep;
}

namespace {

// Iterate the subsets of `mask` (including empty and full).
template <class Fn>
bool any_subset(u32 mask, Fn&& fn) {
  u32 sub = mask;
  for (;;) {
    if (fn(sub)) return true;
    if (sub == 0) return false;
    sub = (sub - 1) & mask;
  }
}

}  // namespace

InequalityReport verify_bk(const TinyInstance& inst, const ConfigEvent& A,
                           const ConfigEvent& B) {
  inst.validate();
  InequalityReport rep;
  rep.inputs_monotone =
      event_is_increasing(inst, A) && event_is_increasing(inst, B);
  // For increasing events, A o B holds at cfg iff the open set splits into
  // disjoint parts W and (open \ W) witnessing A and B respectively: an
  // increasing event is witnessed by a set exactly when the configuration
  // with only that set open already realizes it.
  auto disjointly = [&](u32 cfg) {
    return any_subset(cfg, [&](u32 w) { return A(w) && B(cfg & ~w); });
  };
  rep.lhs = exact_probability(inst, disjointly);
  rep.rhs = exact_probability(inst, A) * exact_probability(inst, B);
  rep.holds = rep.lhs <= rep.rhs + 1e-12;
  return rep;
}

// ---------------------------------------------------------------------------
// Mass transport.

namespace {

i32 base_sublattice_vertex(const RegionGraph& g) {
  for (i32 v = 0; v < g.vcount(); ++v)
    if (g.vflags[v] & kFlagH) return v;
  PERCLAB_REQUIRE(false, "torus has no sublattice vertex");
  return -1;
}

void require_h_torus(const LatticeSpec& spec) {
  for (int a = 0; a < spec.s(); ++a)
    PERCLAB_REQUIRE(spec.axis(a).bc == Bc::Periodic,
                    "mass-transport check needs periodic in-plane axes");
}

// Wrapped L-infinity distance between two vertices.
i64 torus_linf(const LatticeSpec& spec, i64 v, i64 w) {
  i64 best = 0;
  for (int a = 0; a < spec.d(); ++a) {
    i64 diff = spec.coord(v, a) - spec.coord(w, a);
    if (diff < 0) diff = -diff;
    if (spec.axis(a).bc == Bc::Periodic)
      diff = std::min(diff, spec.axis(a).extent() - diff);
    best = std::max(best, diff);
  }
  return best;
}

}  // namespace

std::pair<double, double> transport_same_cluster(
    const RegionGraph& g, const std::vector<unsigned char>& open) {
  i32 x0 = base_sublattice_vertex(g);
  ClusterForest forest;
  build_forest(g, open, forest);
  double size = forest.size_of(x0);
  return {size, size};
}

std::pair<double, double> transport_nearest_h(
    const RegionGraph& g, const std::vector<unsigned char>& open) {
  const LatticeSpec& spec = *g.spec;
  i32 x0 = base_sublattice_vertex(g);
  ClusterForest forest;
  build_forest(g, open, forest);

  // Sublattice vertices (local ids).
  std::vector<i32> hverts;
  for (i32 v = 0; v < g.vcount(); ++v)
    if (g.vflags[v] & kFlagH) hverts.push_back(v);

  // Per-cluster root: minimal wrapped distance to each sublattice vertex,
  // folded over the members. dist[root index][h index].
  std::unordered_map<i32, i32> root_ix;
  std::vector<i32> roots;
  for (i32 v = 0; v < g.vcount(); ++v) {
    i32 r = forest.find(v);
    if (root_ix.emplace(r, static_cast<i32>(roots.size())).second)
      roots.push_back(r);
  }
  const size_t nh = hverts.size();
  constexpr i64 kFar = std::numeric_limits<i64>::max();
  std::vector<i64> dist(roots.size() * nh, kFar);
  for (i32 v = 0; v < g.vcount(); ++v) {
    size_t ri = static_cast<size_t>(root_ix[forest.find(v)]);
    for (size_t h = 0; h < nh; ++h) {
      i64 dvh = torus_linf(spec, g.vertices[v], g.vertices[hverts[h]]);
      i64& cell = dist[ri * nh + h];
      if (dvh < cell) cell = dvh;
    }
  }

  // unique_nearest[cluster] = index into hverts of the unique nearest
  // sublattice vertex outside the cluster, or -1 on a tie or when no
  // candidate exists. The cluster's own sublattice members are excluded:
  // they sit at distance zero and would make the map the identity.
  std::vector<i32> unique_nearest(roots.size(), -1);
  for (size_t ri = 0; ri < roots.size(); ++ri) {
    i64 best = kFar;
    i32 who = -1;
    bool tie = false;
    for (size_t h = 0; h < nh; ++h) {
      if (root_ix[forest.find(hverts[h])] == static_cast<i32>(ri)) continue;
      i64 dd = dist[ri * nh + h];
      if (dd < best) {
        best = dd;
        who = static_cast<i32>(h);
        tie = false;
      } else if (dd == best) {
        tie = true;
      }
    }
    unique_nearest[ri] = (tie || who < 0) ? -1 : who;
  }

  // Outgoing: does the cluster of x0 have a unique nearest sublattice
  // vertex? Incoming: number of sublattice vertices whose cluster's unique
  // nearest sublattice vertex is x0. Mass moves between sublattice vertices
  // only; cluster membership and distances involve the whole graph.
  size_t r0 = static_cast<size_t>(root_ix[forest.find(x0)]);
  double out = unique_nearest[r0] >= 0 ? 1.0 : 0.0;
  std::vector<double> h_members(roots.size(), 0.0);
  for (i32 hv : hverts)
    h_members[static_cast<size_t>(root_ix[forest.find(hv)])] += 1.0;
  double in = 0.0;
  for (size_t ri = 0; ri < roots.size(); ++ri) {
    i32 h = unique_nearest[ri];
    if (h >= 0 && hverts[static_cast<size_t>(h)] == x0) in += h_members[ri];
  }
  return {out, in};
}

TransportReport mass_transport_check_exact(const LatticeSpec& spec,
                                           const ParamPoint& pt,
                                           const TransportSums& m) {
  require_h_torus(spec);
  RegionGraph g = build_region_graph(spec, spec.full_region());
  PERCLAB_REQUIRE(g.edges.size() <= 24,
                  "exact mass-transport check capped at 24 edges");
  const int ne = static_cast<int>(g.edges.size());
  const u32 ncfg = 1u << ne;
  Ksum lhs, rhs;
  std::vector<unsigned char> open(g.edges.size());
  for (u32 cfg = 0; cfg < ncfg; ++cfg) {
    double w = 1.0;
    for (int i = 0; i < ne; ++i) {
      double thr = threshold(g.edges[static_cast<size_t>(i)].cls, pt);
      bool bit = (cfg >> i) & 1u;
      w *= bit ? thr : 1.0 - thr;
      open[static_cast<size_t>(i)] = bit ? 1 : 0;
    }
    if (w == 0.0) continue;
    auto [o, in] = m(g, open);
    lhs.add(w * o);
    rhs.add(w * in);
  }
  TransportReport rep;
  rep.lhs = lhs.s;
  rep.rhs = rhs.s;
  rep.delta = lhs.s - rhs.s;
  rep.se = 0.0;
  rep.n = ncfg;
  return rep;
}

TransportReport mass_transport_check_mc(const LatticeSpec& spec,
                                        const ParamPoint& pt,
                                        const TransportSums& m, i64 n_samples,
                                        u64 seed, int workers) {
  require_h_torus(spec);
  RegionGraph g = build_region_graph(spec, spec.full_region());

  struct Partial {
    Accumulator out, in, diff;
    void merge(const Partial& o) {
      out.merge(o.out);
      in.merge(o.in);
      diff.merge(o.diff);
    }
  };
  Partial total = run_mc_partials<Partial>(
      n_samples, McOptions{workers, 64},
      [&](i64 begin, i64 end, Partial& acc) {
        std::vector<unsigned char> open;
        for (i64 i = begin; i < end; ++i) {
          UniformField f(seed, static_cast<u64>(i));
          fill_open(g, f, pt, open);
          auto [o, in] = m(g, open);
          acc.out.add(o);
          acc.in.add(in);
          acc.diff.add(o - in);
        }
      });

  TransportReport rep;
  rep.lhs = total.out.mean();
  rep.rhs = total.in.mean();
  rep.delta = total.diff.mean();
  rep.se = total.diff.stderr_of_mean();
  rep.n = n_samples;
  return rep;
}

std::vector<std::vector<unsigned char>> all_monotone_events(int ne) {
  PERCLAB_REQUIRE(ne >= 0 && ne <= 5,
                  "exhaustive monotone enumeration capped at 5 edges");
  // Grow one edge at a time: a monotone table on k edges is exactly a pair
  // (f0, f1) of monotone tables on k-1 edges with f0 <= f1 pointwise, where
  // f0 covers the configurations with the new edge closed and f1 those with
  // it open. The counts follow the Dedekind numbers: 2, 3, 6, 20, 168, 7581.
  std::vector<std::vector<unsigned char>> out = {{0}, {1}};
  for (int k = 1; k <= ne; ++k) {
    std::vector<std::vector<unsigned char>> next;
    for (const auto& f0 : out)
      for (const auto& f1 : out) {
        bool le = true;
        for (size_t i = 0; i < f0.size(); ++i)
          if (f0[i] > f1[i]) {
            le = false;
            break;
          }
        if (!le) continue;
        std::vector<unsigned char> table(f0);
        table.insert(table.end(), f1.begin(), f1.end());
        next.push_back(std::move(table));
      }
    out = std::move(next);
  }
  return out;
}

}  // namespace perclab
