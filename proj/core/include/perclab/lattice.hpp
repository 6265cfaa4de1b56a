#pragma once
// Finite axis-aligned pieces of Z^d with a distinguished defect sublattice
// H = Z^s x {0}^(d-s), per-axis boundary conditions, and a canonical
// edge-slot numbering. Everything downstream (fields, cluster runs, the
// renormalization walk) addresses vertices and edges through this header.
//
// Conventions:
//   * Axes are 0-based. The defect sublattice H is the set of vertices whose
//     coordinates on axes s..d-1 are all zero ("thin" axes). Axes 0..s-1 are
//     the in-plane ("H") axes.
//   * A vertex is identified by its mixed-radix index over the axis ranges
//     (axis 0 fastest). Ranges are inclusive [lo, hi].
//   * The canonical edge (v, a) joins v to its +1 neighbor along axis a
//     (wrapping on periodic axes). Edge slot = v * d + a. Slots whose +1
//     neighbor does not exist (high face of a free axis) are invalid; the
//     slot numbering is therefore sparse. RegionGraph (clusters.hpp) builds
//     the dense 0..|E|-1 numbering where one is needed.

#include <array>
#include <cstdlib>
#include <functional>
#include <optional>
#include <unordered_set>
#include <vector>

#include "perclab/common.hpp"

namespace perclab {

enum class Bc : unsigned char { Free, Periodic };

// Edge classes carrying the three parameters of the inhomogeneous model:
// H-edges (both endpoints in the defect sublattice) use q, and the bulk is
// split by the sign of the last coordinate so that the upper and lower
// half-spaces can be driven by different thresholds (p vs t).
enum class EdgeClass : unsigned char { H, Bulk, Plus, Minus };

// How edges are assigned classes.
//   DefectSublattice: H-edges -> H; rest split into Plus (some endpoint has
//     positive last coordinate) and Minus (the remainder).
//   AxisDirection: edges along axis 0 -> Bulk, all other axes -> H. This is
//     the anisotropic-square-lattice rule (axis-0 edges at p, others at q).
enum class ClassRule : unsigned char { DefectSublattice, AxisDirection };

struct AxisSpec {
  i64 lo = 0;
  i64 hi = 0;  // inclusive
  Bc bc = Bc::Free;
  i64 extent() const { return hi - lo + 1; }
};

// Axis-aligned box of coordinates, inclusive on both ends. Used both as an
// iteration window and as the vertex set K in boundary computations.
struct Region {
  std::vector<i64> lo, hi;

  static Region ball(const std::vector<i64>& center, i64 r) {
    Region g;
    for (i64 c : center) {
      g.lo.push_back(c - r);
      g.hi.push_back(c + r);
    }
    return g;
  }
  static Region ball_mixed(const std::vector<i64>& center,
                           const std::vector<i64>& radii) {
    PERCLAB_REQUIRE(center.size() == radii.size(),
                    "region center/radii dimension mismatch");
    Region g;
    for (size_t i = 0; i < center.size(); ++i) {
      g.lo.push_back(center[i] - radii[i]);
      g.hi.push_back(center[i] + radii[i]);
    }
    return g;
  }

  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const std::vector<i64>& c) const {
    for (size_t i = 0; i < lo.size(); ++i)
      if (c[i] < lo[i] || c[i] > hi[i]) return false;
    return true;
  }
  i64 volume() const {
    i64 v = 1;
    for (size_t i = 0; i < lo.size(); ++i) {
      if (hi[i] < lo[i]) return 0;
      v *= hi[i] - lo[i] + 1;
    }
    return v;
  }
  Region intersect(const Region& o) const {
    Region g;
    for (size_t i = 0; i < lo.size(); ++i) {
      g.lo.push_back(std::max(lo[i], o.lo[i]));
      g.hi.push_back(std::min(hi[i], o.hi[i]));
    }
    return g;
  }
  bool subset_of(const Region& o) const {
    for (size_t i = 0; i < lo.size(); ++i)
      if (lo[i] < o.lo[i] || hi[i] > o.hi[i]) return false;
    return true;
  }
};

class LatticeSpec {
 public:
  LatticeSpec(int d, int s, std::vector<AxisSpec> axes,
              ClassRule rule = ClassRule::DefectSublattice)
      : d_(d), s_(s), axes_(std::move(axes)), rule_(rule) {
    PERCLAB_REQUIRE(d >= 1, "dimension d must be >= 1");
    PERCLAB_REQUIRE(s >= 1 && s <= d, "sublattice dimension s must satisfy 1 <= s <= d");
    if (rule_ == ClassRule::DefectSublattice)
      PERCLAB_REQUIRE(s < d, "defect-sublattice rule needs s < d");
    PERCLAB_REQUIRE(static_cast<int>(axes_.size()) == d,
                    "axis list length must equal d");
    strides_.resize(d_);
    i64 acc = 1;
    for (int a = 0; a < d_; ++a) {
      PERCLAB_REQUIRE(axes_[a].hi >= axes_[a].lo, "axis range empty");
      if (axes_[a].bc == Bc::Periodic)
        PERCLAB_REQUIRE(axes_[a].extent() >= 3,
                        "periodic axis needs extent >= 3");
      strides_[a] = acc;
      acc *= axes_[a].extent();
    }
    nvert_ = acc;
  }

  // [-r, r]^d box, all axes free.
  static LatticeSpec box(int d, int s, i64 r,
                         ClassRule rule = ClassRule::DefectSublattice) {
    std::vector<AxisSpec> ax(d, AxisSpec{-r, r, Bc::Free});
    return LatticeSpec(d, s, std::move(ax), rule);
  }
  // Box centered at `c`.
  static LatticeSpec box_at(int d, int s, const std::vector<i64>& c, i64 r,
                            ClassRule rule = ClassRule::DefectSublattice) {
    std::vector<AxisSpec> ax;
    for (int a = 0; a < d; ++a) ax.push_back(AxisSpec{c[a] - r, c[a] + r, Bc::Free});
    return LatticeSpec(d, s, std::move(ax), rule);
  }
  // Slab: in-plane axes [0, len-1], thin axes [-N, N]. Free boundaries
  // everywhere by default; pass Bc::Periodic to wrap the in-plane axes.
  static LatticeSpec slab(int d, int s, i64 len, i64 N, Bc plane_bc = Bc::Free,
                          ClassRule rule = ClassRule::DefectSublattice) {
    std::vector<AxisSpec> ax;
    for (int a = 0; a < s; ++a) ax.push_back(AxisSpec{0, len - 1, plane_bc});
    for (int a = s; a < d; ++a) ax.push_back(AxisSpec{-N, N, Bc::Free});
    return LatticeSpec(d, s, std::move(ax), rule);
  }

  int d() const { return d_; }
  int s() const { return s_; }
  ClassRule rule() const { return rule_; }
  const AxisSpec& axis(int a) const { return axes_[a]; }
  i64 vertex_count() const { return nvert_; }
  i64 stride(int a) const { return strides_[a]; }

  bool contains(const std::vector<i64>& c) const {
    for (int a = 0; a < d_; ++a)
      if (c[a] < axes_[a].lo || c[a] > axes_[a].hi) return false;
    return true;
  }

  i64 vertex_index(const std::vector<i64>& c) const {
    i64 v = 0;
    for (int a = 0; a < d_; ++a) v += (c[a] - axes_[a].lo) * strides_[a];
    return v;
  }

  void vertex_coords(i64 v, std::vector<i64>& c) const {
    c.resize(d_);
    for (int a = 0; a < d_; ++a) {
      c[a] = axes_[a].lo + (v / strides_[a]) % axes_[a].extent();
    }
  }
  std::vector<i64> coords_of(i64 v) const {
    std::vector<i64> c;
    vertex_coords(v, c);
    return c;
  }

  i64 coord(i64 v, int a) const {
    return axes_[a].lo + (v / strides_[a]) % axes_[a].extent();
  }

  // Index of the neighbor along axis a in direction dir (+1/-1),
  // or -1 if it does not exist (free boundary).
  i64 neighbor(i64 v, int a, int dir) const {
    i64 c = coord(v, a);
    if (dir > 0) {
      if (c < axes_[a].hi) return v + strides_[a];
      if (axes_[a].bc == Bc::Periodic) return v - (axes_[a].extent() - 1) * strides_[a];
      return -1;
    } else {
      if (c > axes_[a].lo) return v - strides_[a];
      if (axes_[a].bc == Bc::Periodic) return v + (axes_[a].extent() - 1) * strides_[a];
      return -1;
    }
  }

  // Canonical edges are (v, +a). Sparse slot numbering.
  i64 edge_slot(i64 v, int a) const { return v * d_ + a; }
  bool edge_valid(i64 v, int a) const { return neighbor(v, a, +1) >= 0; }
  i64 slot_vertex(i64 slot) const { return slot / d_; }
  int slot_axis(i64 slot) const { return static_cast<int>(slot % d_); }

  i64 edge_count() const {
    i64 total = 0;
    for (int a = 0; a < d_; ++a) {
      i64 along = axes_[a].bc == Bc::Periodic ? axes_[a].extent()
                                              : axes_[a].extent() - 1;
      i64 rest = 1;
      for (int b = 0; b < d_; ++b)
        if (b != a) rest *= axes_[b].extent();
      total += along * rest;
    }
    return total;
  }

  bool in_H(const std::vector<i64>& c) const {
    for (int a = s_; a < d_; ++a)
      if (c[a] != 0) return false;
    return true;
  }
  bool in_H(i64 v) const {
    for (int a = s_; a < d_; ++a)
      if (coord(v, a) != 0) return false;
    return true;
  }

  EdgeClass classify_edge(i64 v, int a) const {
    if (rule_ == ClassRule::AxisDirection) {
      return a == 0 ? EdgeClass::Bulk : EdgeClass::H;
    }
    // Defect-sublattice rule. The canonical edge (v, +a) has endpoints
    // v and w = v + e_a (with wrap).
    if (a >= s_) {
      // Edge leaves the hyperplane of its base point along a thin axis:
      // cannot be an H-edge.
      i64 c_last = coord(v, d_ - 1);
      i64 w_last = c_last;
      if (a == d_ - 1) {
        w_last = (axes_[a].bc == Bc::Periodic && c_last == axes_[a].hi)
                     ? axes_[a].lo
                     : c_last + 1;
      }
      return (std::max(c_last, w_last) > 0) ? EdgeClass::Plus : EdgeClass::Minus;
    }
    // In-plane direction: H-edge iff the (shared) thin coordinates vanish.
    bool h = true;
    for (int b = s_; b < d_; ++b)
      if (coord(v, b) != 0) {
        h = false;
        break;
      }
    if (h) return EdgeClass::H;
    i64 c_last = coord(v, d_ - 1);
    return (c_last > 0) ? EdgeClass::Plus : EdgeClass::Minus;
  }
  EdgeClass classify_slot(i64 slot) const {
    return classify_edge(slot_vertex(slot), slot_axis(slot));
  }

  Region full_region() const {
    Region g;
    for (int a = 0; a < d_; ++a) {
      g.lo.push_back(axes_[a].lo);
      g.hi.push_back(axes_[a].hi);
    }
    return g;
  }

 private:
  int d_, s_;
  std::vector<AxisSpec> axes_;
  ClassRule rule_;
  std::vector<i64> strides_;
  i64 nvert_ = 0;
};

// Visit every lattice vertex inside `win` (clipped to the lattice) in
// index order. fn(vertex_index, coords).
template <class Fn>
void for_each_vertex(const LatticeSpec& spec, const Region& win, Fn&& fn) {
  const int d = spec.d();
  std::vector<i64> lo(d), hi(d);
  for (int a = 0; a < d; ++a) {
    lo[a] = std::max(win.lo[a], spec.axis(a).lo);
    hi[a] = std::min(win.hi[a], spec.axis(a).hi);
    if (lo[a] > hi[a]) return;
  }
  std::vector<i64> c = lo;
  for (;;) {
    fn(spec.vertex_index(c), c);
    int a = 0;
    while (a < d) {
      if (c[a] < hi[a]) {
        ++c[a];
        break;
      }
      c[a] = lo[a];
      ++a;
    }
    if (a == d) return;
  }
}

template <class Fn>
void for_each_vertex(const LatticeSpec& spec, Fn&& fn) {
  for_each_vertex(spec, spec.full_region(), std::forward<Fn>(fn));
}

// The three boundary notions for a box K (clipped to the lattice):
//   interior: vertices of K with at least one lattice neighbor outside K,
//   exterior_v: vertices outside K adjacent to K,
//   exterior_e: edge slots with exactly one endpoint in K.
struct BoundarySets {
  std::vector<i64> interior;    // subset of K
  std::vector<i64> exterior_v;  // disjoint from K
  std::vector<i64> exterior_e;  // edge slots
};

inline BoundarySets boundary_sets(const LatticeSpec& spec, const Region& K) {
  BoundarySets out;
  std::unordered_set<i64> ext_seen;
  std::vector<i64> wc;
  for_each_vertex(spec, K, [&](i64 v, const std::vector<i64>& c) {
    (void)c;
    bool on_bd = false;
    for (int a = 0; a < spec.d(); ++a) {
      for (int dir : {+1, -1}) {
        i64 w = spec.neighbor(v, a, dir);
        if (w < 0) continue;
        spec.vertex_coords(w, wc);
        if (K.contains(wc)) continue;
        on_bd = true;
        if (ext_seen.insert(w).second) out.exterior_v.push_back(w);
        out.exterior_e.push_back(dir > 0 ? spec.edge_slot(v, a)
                                         : spec.edge_slot(w, a));
      }
    }
    if (on_bd) out.interior.push_back(v);
  });
  return out;
}

// Same, for an arbitrary vertex set.
inline BoundarySets boundary_sets(const LatticeSpec& spec,
                                  const std::vector<i64>& K) {
  std::unordered_set<i64> in(K.begin(), K.end());
  BoundarySets out;
  std::unordered_set<i64> ext_seen;
  std::unordered_set<i64> edge_seen;
  for (i64 v : K) {
    bool on_bd = false;
    for (int a = 0; a < spec.d(); ++a) {
      for (int dir : {+1, -1}) {
        i64 w = spec.neighbor(v, a, dir);
        if (w < 0 || in.count(w)) continue;
        on_bd = true;
        if (ext_seen.insert(w).second) out.exterior_v.push_back(w);
        i64 slot = dir > 0 ? spec.edge_slot(v, a) : spec.edge_slot(w, a);
        if (edge_seen.insert(slot).second) out.exterior_e.push_back(slot);
      }
    }
    if (on_bd) out.interior.push_back(v);
  }
  return out;
}

// H-box around a center that lies in the defect sublattice: radius m along
// the in-plane axes, 0 along the thin axes.
inline Region sublattice_box(const LatticeSpec& spec,
                             const std::vector<i64>& center, i64 m) {
  PERCLAB_REQUIRE(spec.in_H(center), "H-box center must lie in the sublattice");
  std::vector<i64> radii(spec.d(), 0);
  for (int a = 0; a < spec.s(); ++a) radii[a] = m;
  return Region::ball_mixed(center, radii);
}

// Vertices of `region` (clipped) that lie in H.
inline std::vector<i64> sublattice_vertices(const LatticeSpec& spec,
                                            const Region& region) {
  Region clip = region;
  for (int a = spec.s(); a < spec.d(); ++a) {
    clip.lo[a] = std::max<i64>(clip.lo[a], 0);
    clip.hi[a] = std::min<i64>(clip.hi[a], 0);
  }
  std::vector<i64> out;
  for_each_vertex(spec, clip,
                  [&](i64 v, const std::vector<i64>&) { out.push_back(v); });
  return out;
}

}  // namespace perclab
