#pragma once
// Cluster machinery on a finite region: dense graph snapshot, union-find
// forest with face/sublattice flags, spanning counts, set-to-set
// connectivity, and trifurcation counting via articulation points.

#include <algorithm>
#include <array>
#include <cstring>
#include <unordered_map>
#include <vector>

#include "perclab/common.hpp"
#include "perclab/field.hpp"
#include "perclab/lattice.hpp"

namespace perclab {

enum class EdgeMask : unsigned char { All, ExcludeH, OnlyH };

inline bool mask_admits(EdgeMask m, EdgeClass c) {
  switch (m) {
    case EdgeMask::All: return true;
    case EdgeMask::ExcludeH: return c != EdgeClass::H;
    case EdgeMask::OnlyH: return c == EdgeClass::H;
  }
  return true;
}

struct RegionEdge {
  i32 a = 0, b = 0;   // local endpoint ids
  i64 slot = 0;       // global edge slot (randomness key)
  EdgeClass cls = EdgeClass::Bulk;
};

// Vertex flag bits: 2*a -> on the low face of axis a, 2*a+1 -> high face
// (faces of the clipped region), bit 30 -> lies in the defect sublattice.
constexpr u32 kFlagH = 1u << 30;

// Dense snapshot of the subgraph induced by a region (clipped to the
// lattice). Local vertex ids are 0..V-1 in lattice index order; the edge
// list position is the dense edge index (the bijection onto 0..|E|-1).
struct RegionGraph {
  const LatticeSpec* spec = nullptr;
  Region region;
  std::vector<i64> vertices;            // local id -> lattice vertex index
  std::unordered_map<i64, i32> local;   // lattice vertex index -> local id
  std::vector<u32> vflags;
  std::vector<RegionEdge> edges;

  i32 vcount() const { return static_cast<i32>(vertices.size()); }
  i32 local_of(i64 vertex) const {
    auto it = local.find(vertex);
    return it == local.end() ? -1 : it->second;
  }
};

inline RegionGraph build_region_graph(const LatticeSpec& spec,
                                      const Region& region,
                                      EdgeMask mask = EdgeMask::All) {
  RegionGraph g;
  g.spec = &spec;
  g.region = region;
  const int d = spec.d();
  std::vector<i64> clip_lo(d), clip_hi(d);
  for (int a = 0; a < d; ++a) {
    clip_lo[a] = std::max(region.lo[a], spec.axis(a).lo);
    clip_hi[a] = std::min(region.hi[a], spec.axis(a).hi);
  }
  for_each_vertex(spec, region, [&](i64 v, const std::vector<i64>& c) {
    i32 id = static_cast<i32>(g.vertices.size());
    g.vertices.push_back(v);
    g.local.emplace(v, id);
    u32 f = 0;
    for (int a = 0; a < d; ++a) {
      if (c[a] == clip_lo[a]) f |= 1u << (2 * a);
      if (c[a] == clip_hi[a]) f |= 1u << (2 * a + 1);
    }
    if (spec.in_H(c)) f |= kFlagH;
    g.vflags.push_back(f);
  });
  // Collect canonical edges with both endpoints in the snapshot.
  std::vector<i64> wc;
  for (i32 id = 0; id < g.vcount(); ++id) {
    i64 v = g.vertices[id];
    for (int a = 0; a < d; ++a) {
      i64 w = spec.neighbor(v, a, +1);
      if (w < 0) continue;
      auto it = g.local.find(w);
      if (it == g.local.end()) continue;
      EdgeClass cls = spec.classify_edge(v, a);
      if (!mask_admits(mask, cls)) continue;
      g.edges.push_back(RegionEdge{id, it->second, spec.edge_slot(v, a), cls});
    }
  }
  return g;
}

// Union-find over local ids with size union and path halving; per-root OR
// of vertex flags.
struct ClusterForest {
  std::vector<i32> parent;
  std::vector<i32> sz;
  std::vector<u32> flags;

  void reset(i32 n) {
    parent.resize(n);
    sz.assign(n, 1);
    flags.assign(n, 0);
    for (i32 i = 0; i < n; ++i) parent[i] = i;
  }
  i32 find(i32 x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  // Returns the surviving root.
  i32 unite(i32 x, i32 y) {
    i32 rx = find(x), ry = find(y);
    if (rx == ry) return rx;
    if (sz[rx] < sz[ry]) std::swap(rx, ry);
    parent[ry] = rx;
    sz[rx] += sz[ry];
    flags[rx] |= flags[ry];
    return rx;
  }
  i32 size_of(i32 x) { return sz[find(x)]; }
  u32 flags_of(i32 x) { return flags[find(x)]; }
};

// Evaluate the open indicator of every edge of `g` for one sample.
template <class FieldT>
void fill_open(const RegionGraph& g, const FieldT& f, const ParamPoint& pt,
               std::vector<unsigned char>& open) {
  open.resize(g.edges.size());
  const double thr[4] = {pt.q, pt.p, pt.p, pt.t};  // indexed by EdgeClass
  for (size_t i = 0; i < g.edges.size(); ++i) {
    open[i] =
        f.u(g.edges[i].slot) < thr[static_cast<int>(g.edges[i].cls)] ? 1 : 0;
  }
}

// Unite along open edges and push vertex flags up to the roots.
inline void build_forest(const RegionGraph& g,
                         const std::vector<unsigned char>& open,
                         ClusterForest& forest) {
  forest.reset(g.vcount());
  for (i32 i = 0; i < g.vcount(); ++i) forest.flags[i] = g.vflags[i];
  for (size_t i = 0; i < g.edges.size(); ++i) {
    if (open[i]) forest.unite(g.edges[i].a, g.edges[i].b);
  }
  // Re-push flags: unite already ORs, but the initial assignment happens
  // before any union, so the invariant holds by construction.
}

template <class FieldT>
void build_clusters(const RegionGraph& g, const FieldT& f, const ParamPoint& pt,
                    std::vector<unsigned char>& open, ClusterForest& forest) {
  fill_open(g, f, pt, open);
  build_forest(g, open, forest);
}

// Number of clusters joining the two faces of `axis`, with at least
// `min_size` vertices. Spanning along a periodic axis is ill-posed.
inline i64 count_spanning_clusters(const RegionGraph& g, ClusterForest& forest,
                                   int axis, i64 min_size = 0) {
  PERCLAB_REQUIRE(g.spec->axis(axis).bc == Bc::Free,
                  "spanning count requested along a periodic axis");
  const u32 want = (1u << (2 * axis)) | (1u << (2 * axis + 1));
  i64 count = 0;
  for (i32 v = 0; v < g.vcount(); ++v) {
    if (forest.find(v) != v) continue;
    if ((forest.flags[v] & want) == want && forest.sz[v] >= min_size) ++count;
  }
  return count;
}

// C(S', S): members of S' whose cluster meets S. Inputs are local ids.
inline std::vector<i32> connected_to_set(ClusterForest& forest,
                                         const std::vector<i32>& s_prime,
                                         const std::vector<i32>& s) {
  std::unordered_map<i32, char> root_in_s;
  for (i32 v : s) root_in_s[forest.find(v)] = 1;
  std::vector<i32> out;
  for (i32 u : s_prime) {
    if (root_in_s.count(forest.find(u))) out.push_back(u);
  }
  return out;
}

// Trifurcation count for one sample. A vertex v is a trifurcation point if
// deleting v (equivalently all its incident open edges, discarding the then
// isolated v) splits its open cluster into >= 3 components each containing
// a region-boundary vertex. Computed with one iterative articulation-point
// DFS per cluster: O(V + E) per sample. The deterministic bound
// count <= #boundary vertices is asserted.
//
// The branching vertices and their arm counts (number of boundary-touching
// pieces after deletion) can be collected into a TrifurcationReport.
struct TrifurcationReport {
  std::vector<i64> vertices;  // lattice vertex indices, ascending
  std::vector<i32> arms;      // parallel to `vertices`; every entry >= 3
  i64 boundary_size = 0;      // #region-boundary vertices in the snapshot
};

struct TrifurcationScratch {
  std::vector<i32> head, nxt, to;          // adjacency (each edge twice)
  std::vector<i32> disc, low, parent, peid;
  std::vector<i64> bd_sub;                 // boundary vertices in DFS subtree
  std::vector<i64> split_comps, split_bd;  // per-vertex fold of child subtrees
  std::vector<i32> stack_v, stack_e, order;
  std::vector<unsigned char> is_bd;
};

inline i64 count_trifurcations(const RegionGraph& g,
                               const std::vector<unsigned char>& open,
                               TrifurcationScratch& ws,
                               i64* boundary_size_out = nullptr,
                               TrifurcationReport* report = nullptr) {
  const i32 n = g.vcount();
  ws.head.assign(n, -1);
  const i32 m2 = static_cast<i32>(2 * g.edges.size());
  ws.nxt.resize(m2);
  ws.to.resize(m2);
  i32 ecnt = 0;
  for (size_t i = 0; i < g.edges.size(); ++i) {
    if (!open[i]) continue;
    i32 a = g.edges[i].a, b = g.edges[i].b;
    ws.to[ecnt] = b;
    ws.nxt[ecnt] = ws.head[a];
    ws.head[a] = ecnt++;
    ws.to[ecnt] = a;
    ws.nxt[ecnt] = ws.head[b];
    ws.head[b] = ecnt++;
  }
  ws.is_bd.assign(n, 0);
  i64 bd_total = 0;
  for (i32 v = 0; v < n; ++v) {
    // Region boundary: any face bit set (positions below the H bit).
    if (g.vflags[v] & ((1u << 30) - 1)) {
      ws.is_bd[v] = 1;
      ++bd_total;
    }
  }
  if (boundary_size_out) *boundary_size_out = bd_total;

  ws.disc.assign(n, -1);
  ws.low.assign(n, 0);
  ws.parent.assign(n, -1);
  ws.peid.assign(n, -1);
  ws.bd_sub.assign(n, 0);
  ws.split_comps.assign(n, 0);
  ws.split_bd.assign(n, 0);

  i64 trifurcations = 0;
  i32 timer = 0;
  for (i32 root = 0; root < n; ++root) {
    if (ws.disc[root] != -1 || ws.head[root] < 0) continue;
    // Iterative articulation-point DFS over root's cluster.
    i64 cluster_bd = 0;
    std::vector<i32>& sv = ws.stack_v;
    std::vector<i32>& se = ws.stack_e;
    std::vector<i32>& order = ws.order;
    sv.clear();
    se.clear();
    order.clear();

    ws.disc[root] = ws.low[root] = timer++;
    ws.bd_sub[root] = ws.is_bd[root];
    cluster_bd += ws.is_bd[root];
    sv.push_back(root);
    se.push_back(ws.head[root]);
    order.push_back(root);

    while (!sv.empty()) {
      i32 v = sv.back();
      i32 e = se.back();
      if (e < 0) {
        // v finished: fold its subtree into the parent frame.
        sv.pop_back();
        se.pop_back();
        if (!sv.empty()) {
          i32 p = sv.back();
          ws.low[p] = std::min(ws.low[p], ws.low[v]);
          if (ws.low[v] >= ws.disc[p]) {
            // v's subtree splits off when p is removed.
            if (ws.bd_sub[v] > 0) ++ws.split_comps[p];
            ws.split_bd[p] += ws.bd_sub[v];
          }
          ws.bd_sub[p] += ws.bd_sub[v];
        }
        continue;
      }
      se.back() = ws.nxt[e];
      i32 w = ws.to[e];
      if (ws.disc[w] == -1) {
        ws.parent[w] = v;
        ws.peid[w] = e / 2;
        ws.disc[w] = ws.low[w] = timer++;
        ws.bd_sub[w] = ws.is_bd[w];
        cluster_bd += ws.is_bd[w];
        order.push_back(w);
        sv.push_back(w);
        se.push_back(ws.head[w]);
      } else if (e / 2 != ws.peid[v]) {
        ws.low[v] = std::min(ws.low[v], ws.disc[w]);
      }
    }

    // Decide every vertex of this cluster. For a non-root v the components
    // of (cluster minus v) are the split-off child subtrees plus the
    // remainder; for the DFS root every child subtree is its own component
    // (low(child) >= disc(root) always, so the fold above counted them all).
    for (i32 v : order) {
      i64 comps_with_bd = ws.split_comps[v];
      if (ws.parent[v] >= 0) {
        i64 rest_bd = cluster_bd - ws.split_bd[v] - ws.is_bd[v];
        if (rest_bd > 0) ++comps_with_bd;
      }
      if (comps_with_bd >= 3) {
        ++trifurcations;
        if (report) {
          report->vertices.push_back(g.vertices[static_cast<size_t>(v)]);
          report->arms.push_back(static_cast<i32>(comps_with_bd));
        }
      }
    }
  }

  PERCLAB_CHECK(trifurcations <= bd_total,
                "trifurcation count exceeded boundary size");
  if (report) {
    report->boundary_size = bd_total;
    // DFS visits clusters in local-id order but vertices within a cluster
    // in traversal order; sort for a stable, index-ascending report.
    std::vector<size_t> perm(report->vertices.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::sort(perm.begin(), perm.end(), [&](size_t a, size_t b) {
      return report->vertices[a] < report->vertices[b];
    });
    TrifurcationReport sorted;
    sorted.boundary_size = bd_total;
    sorted.vertices.reserve(perm.size());
    sorted.arms.reserve(perm.size());
    for (size_t i : perm) {
      sorted.vertices.push_back(report->vertices[i]);
      sorted.arms.push_back(report->arms[i]);
    }
    *report = std::move(sorted);
  }
  return trifurcations;
}

// Full report for one sample: the branching vertices of the configuration
// restricted to `region`, each splitting its cluster into >= 3 pieces that
// reach the region boundary. Needs at least one free axis so boundary
// contact stands in for escaping to infinity.
template <class FieldT>
TrifurcationReport find_trifurcations(const FieldT& f, const LatticeSpec& spec,
                                      const ParamPoint& pt,
                                      const Region& region) {
  bool any_free = false;
  for (int a = 0; a < spec.d(); ++a)
    if (spec.axis(a).bc == Bc::Free) any_free = true;
  PERCLAB_REQUIRE(any_free,
                  "trifurcation search needs at least one free axis");
  RegionGraph g = build_region_graph(spec, region);
  std::vector<unsigned char> open;
  fill_open(g, f, pt, open);
  TrifurcationScratch ws;
  TrifurcationReport report;
  count_trifurcations(g, open, ws, nullptr, &report);
  return report;
}

// One-sample value of |C(dv B_{n-1}; H)| / |B_n cap H| for a box region:
// the fraction formed by boundary-shell vertices whose open cluster meets
// the defect sublattice beyond the vertex itself, over the sublattice
// volume of the box. The shell dv B_{n-1} consists of the region vertices
// with exactly one coordinate on a face. Connectivity is computed inside
// the region.
struct BoundaryRatioScratch {
  std::vector<i64> h_in_cluster;
};

inline double boundary_to_h_ratio(const RegionGraph& g,
                                  const std::vector<unsigned char>& open,
                                  ClusterForest& forest,
                                  BoundaryRatioScratch& ws) {
  PERCLAB_REQUIRE(g.spec->s() < g.spec->d(),
                  "boundary-to-sublattice ratio needs s < d");
  build_forest(g, open, forest);
  const i32 n = g.vcount();
  ws.h_in_cluster.assign(static_cast<size_t>(n), 0);
  i64 denom = 0;
  for (i32 v = 0; v < n; ++v) {
    if (g.vflags[v] & kFlagH) {
      ++denom;
      ++ws.h_in_cluster[static_cast<size_t>(forest.find(v))];
    }
  }
  PERCLAB_REQUIRE(denom > 0, "region does not meet the sublattice");
  const u32 face_mask = (1u << (2 * g.spec->d())) - 1;
  i64 num = 0;
  for (i32 v = 0; v < n; ++v) {
    u32 fbits = g.vflags[v] & face_mask;
    if (fbits == 0 || (fbits & (fbits - 1)) != 0) continue;  // not shell
    i64 h = ws.h_in_cluster[static_cast<size_t>(forest.find(v))];
    i64 self = (g.vflags[v] & kFlagH) ? 1 : 0;
    if (h - self > 0) ++num;
  }
  return static_cast<double>(num) / static_cast<double>(denom);
}

template <class FieldT>
double boundary_to_h_ratio(const FieldT& f, const LatticeSpec& spec,
                           const ParamPoint& pt, const Region& region) {
  RegionGraph g = build_region_graph(spec, region);
  std::vector<unsigned char> open;
  fill_open(g, f, pt, open);
  ClusterForest forest;
  BoundaryRatioScratch ws;
  return boundary_to_h_ratio(g, open, forest, ws);
}

}  // namespace perclab
