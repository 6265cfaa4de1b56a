#include "perclab/gmgeom.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace perclab {

namespace {

constexpr double kEps = 1e-9;

// Largest coordinate magnitude.
i64 linf(const std::vector<i64>& c) {
  i64 best = 0;
  for (i64 x : c) best = std::max(best, x < 0 ? -x : x);
  return best;
}

}  // namespace

GMGeometry GMGeometry::make(int d, int s, double alpha, double beta, i64 m,
                            i64 n) {
  PERCLAB_REQUIRE(d >= 2, "dimension must be >= 2");
  PERCLAB_REQUIRE(s >= 1 && s < d, "sublattice dimension must be in [1, d)");
  PERCLAB_REQUIRE(alpha > 0.0 && beta > 0.0,
                  "window proportions must be positive");
  PERCLAB_REQUIRE(m >= 0, "seed radius must be nonnegative");
  PERCLAB_REQUIRE(n >= 1, "scale must be >= 1");
  PERCLAB_REQUIRE(beta * static_cast<double>(n) > static_cast<double>(m),
                  "annulus must start beyond the seed core: beta*n > m");

  GMGeometry g;
  g.d = d;
  g.s = s;
  g.alpha = alpha;
  g.beta = beta;
  g.m = m;
  g.n = n;
  double bn = beta * static_cast<double>(n);
  double an = alpha * static_cast<double>(n);
  g.band_lo = static_cast<i64>(std::ceil(bn + 1.0 - kEps));
  g.band_hi = static_cast<i64>(std::floor(bn + an + kEps));
  PERCLAB_REQUIRE(g.band_hi >= g.band_lo,
                  "window is empty: alpha*n < 1 at this scale");
  g.degenerate_seed_window =
      !(an > 2.0 * static_cast<double>(m) + 1.0 + kEps);
  return g;
}

LatticeSpec GMGeometry::make_spec(ClassRule rule) const {
  return LatticeSpec::box(d, s, band_hi, rule);
}

bool GMGeometry::in_band(const LatticeSpec& spec, i64 v) const {
  if (!spec.in_H(v)) return false;
  std::vector<i64> c = spec.coords_of(v);
  i64 r = linf(c);
  return r >= band_lo && r <= band_hi;
}

bool GMGeometry::in_window(const LatticeSpec& spec, i64 v) const {
  std::vector<i64> c = spec.coords_of(v);
  if (c[0] < band_lo || c[0] > band_hi) return false;
  for (int a = 1; a < s; ++a)
    if (c[a] < 0 || c[a] > band_hi) return false;
  for (int a = s; a < d; ++a)
    if (c[a] != 0) return false;
  return true;
}

std::vector<std::vector<i64>> GMGeometry::seed_centers() const {
  std::vector<std::vector<i64>> out;
  i64 lo0 = band_lo + m, hi0 = band_hi - m;
  if (lo0 > hi0) return out;
  for (int a = 1; a < s; ++a)
    if (m > band_hi - m) return out;

  std::vector<i64> c(static_cast<size_t>(d), 0);
  c[0] = lo0;
  for (int a = 1; a < s; ++a) c[static_cast<size_t>(a)] = m;
  for (;;) {
    out.push_back(c);
    int a = s - 1;
    for (; a >= 0; --a) {
      i64 hi = a == 0 ? hi0 : band_hi - m;
      if (c[static_cast<size_t>(a)] < hi) {
        ++c[static_cast<size_t>(a)];
        for (int b = a + 1; b < s; ++b) c[static_cast<size_t>(b)] = m;
        break;
      }
    }
    if (a < 0) break;
  }
  // Lexicographic coordinate order, most significant axis first.
  std::sort(out.begin(), out.end());
  return out;
}

GMSets GMSets::make(const GMGeometry& geo, ClassRule rule) {
  GMSets sets;
  sets.geo = geo;
  sets.spec_ptr = std::make_shared<const LatticeSpec>(geo.make_spec(rule));
  const LatticeSpec& spec = *sets.spec_ptr;
  sets.graph = build_region_graph(spec, spec.full_region());
  const RegionGraph& g = sets.graph;

  sets.band_mask.assign(static_cast<size_t>(g.vcount()), 0);
  sets.window_mask.assign(static_cast<size_t>(g.vcount()), 0);
  sets.t_mask.assign(static_cast<size_t>(g.vcount()), 0);

  std::vector<i64> band_verts, window_verts;
  for (i32 v = 0; v < g.vcount(); ++v) {
    i64 lat = g.vertices[static_cast<size_t>(v)];
    if (geo.in_band(spec, lat)) {
      sets.band_mask[static_cast<size_t>(v)] = 1;
      band_verts.push_back(lat);
    }
    if (geo.in_window(spec, lat)) {
      sets.window_mask[static_cast<size_t>(v)] = 1;
      window_verts.push_back(lat);
    }
  }

  BoundarySets sbd = boundary_sets(spec, band_verts);
  for (i64 lat : sbd.exterior_v) sets.du_targets.push_back(g.local_of(lat));
  BoundarySets fbd = boundary_sets(spec, window_verts);
  for (i64 lat : fbd.exterior_v) {
    i32 loc = g.local_of(lat);
    sets.t_targets.push_back(loc);
    sets.t_mask[static_cast<size_t>(loc)] = 1;
  }

  std::vector<i64> origin(static_cast<size_t>(spec.d()), 0);
  for (i64 lat : sublattice_vertices(spec, Region::ball(origin, geo.m)))
    sets.sources.push_back(g.local_of(lat));
  PERCLAB_CHECK(!sets.sources.empty(), "seed core vanished from the box");

  sets.edge_of_slot.assign(
      static_cast<size_t>(spec.vertex_count() * spec.d()), -1);
  for (size_t i = 0; i < g.edges.size(); ++i)
    sets.edge_of_slot[static_cast<size_t>(g.edges[i].slot)] =
        static_cast<i32>(i);

  for (const std::vector<i64>& center : geo.seed_centers()) {
    std::vector<i64> members =
        sublattice_vertices(spec, sublattice_box(spec, center, geo.m));
    std::vector<i32> verts, edges;
    std::unordered_set<i64> inside(members.begin(), members.end());
    for (i64 lat : members) {
      verts.push_back(g.local_of(lat));
      for (int a = 0; a < spec.s(); ++a) {
        i64 w = spec.neighbor(lat, a, +1);
        if (w >= 0 && inside.count(w)) {
          i32 e = sets.edge_of_slot[static_cast<size_t>(lat * spec.d() + a)];
          PERCLAB_CHECK(e >= 0, "seed edge missing from the box graph");
          edges.push_back(e);
        }
      }
    }
    sets.seed_verts.push_back(std::move(verts));
    sets.seed_edges.push_back(std::move(edges));
  }
  return sets;
}

namespace {

// Union open edges whose endpoints both avoid `blocked` (empty = no
// blocking), then count targets sharing a component with a source.
i64 count_joined(const GMSets& sets, const std::vector<unsigned char>& open,
                 const std::vector<unsigned char>& blocked,
                 const std::vector<i32>& targets, ClusterForest& forest) {
  const RegionGraph& g = sets.graph;
  forest.reset(g.vcount());
  for (size_t i = 0; i < g.edges.size(); ++i) {
    if (!open[i]) continue;
    const RegionEdge& e = g.edges[i];
    if (!blocked.empty() &&
        (blocked[static_cast<size_t>(e.a)] || blocked[static_cast<size_t>(e.b)]))
      continue;
    forest.unite(e.a, e.b);
  }
  std::unordered_set<i32> source_roots;
  for (i32 v : sets.sources) source_roots.insert(forest.find(v));
  i64 count = 0;
  for (i32 t : targets)
    if (source_roots.count(forest.find(t))) ++count;
  return count;
}

}  // namespace

i64 gm_count_u(const GMSets& sets, const std::vector<unsigned char>& open,
               ClusterForest& forest) {
  return count_joined(sets, open, sets.band_mask, sets.du_targets, forest);
}

i64 gm_count_v(const GMSets& sets, const std::vector<unsigned char>& open,
               ClusterForest& forest) {
  return count_joined(sets, open, sets.window_mask, sets.t_targets, forest);
}

void gm_k_targets(const GMSets& sets, const std::vector<unsigned char>& open,
                  std::vector<i32>& out) {
  out.clear();
  const RegionGraph& g = sets.graph;
  const LatticeSpec& spec = sets.spec();

  // Window vertices covered by a fully open seed.
  std::vector<unsigned char> seeded(static_cast<size_t>(g.vcount()), 0);
  for (size_t sdi = 0; sdi < sets.seed_edges.size(); ++sdi) {
    bool all = true;
    for (i32 e : sets.seed_edges[sdi])
      if (!open[static_cast<size_t>(e)]) {
        all = false;
        break;
      }
    if (all)
      for (i32 v : sets.seed_verts[sdi]) seeded[static_cast<size_t>(v)] = 1;
  }

  // K: T-vertices with an open edge into a seeded window vertex.
  for (i32 t : sets.t_targets) {
    i64 lat = g.vertices[static_cast<size_t>(t)];
    bool hit = false;
    for (int a = 0; a < spec.d() && !hit; ++a)
      for (int dir = -1; dir <= 1 && !hit; dir += 2) {
        i64 w = spec.neighbor(lat, a, dir);
        if (w < 0) continue;
        i32 wl = g.local_of(w);
        if (wl < 0 || !seeded[static_cast<size_t>(wl)]) continue;
        i64 slot = dir > 0 ? lat * spec.d() + a : w * spec.d() + a;
        i32 e = sets.edge_of_slot[static_cast<size_t>(slot)];
        if (e >= 0 && open[static_cast<size_t>(e)]) hit = true;
      }
    if (hit) out.push_back(t);
  }
}

bool gm_seed_reach(const GMSets& sets, const std::vector<unsigned char>& open,
                   ClusterForest& forest) {
  std::vector<i32> k_targets;
  gm_k_targets(sets, open, k_targets);
  if (k_targets.empty()) return false;

  static const std::vector<unsigned char> kNoBlock;
  return count_joined(sets, open, kNoBlock, k_targets, forest) > 0;
}

}  // namespace perclab
