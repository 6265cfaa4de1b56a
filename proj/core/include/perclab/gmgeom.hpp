#pragma once
// Geometry for the seed-window events: the sublattice annulus
// S = {x in H : beta*n + 1 <= |x|_inf <= beta*n + alpha*n}, the window
// F = [beta*n+1, beta*n+alpha*n] x [0, beta*n+alpha*n]^{s-1} x {0}^{d-s},
// its clipped exterior boundary T, and the derived per-sample sets
//   U = {x in dv(S) : x <-> B_m^H inside B \ S},
//   V = {x in T    : x <-> B_m^H inside B \ F},
//   seed reach = {B_m^H <-> K inside B}, where K collects the T-vertices
// with an open edge into a window vertex covered by a fully open seed
// (a translate z + B_m^H contained in F with every induced edge open).
//
// Real radii are integerized with a small epsilon guard so that rationals
// like alpha*n = 5 land on exact integer bounds.

#include <memory>
#include <vector>

#include "perclab/clusters.hpp"
#include "perclab/common.hpp"
#include "perclab/lattice.hpp"

namespace perclab {

struct GMGeometry {
  int d = 3, s = 2;
  double alpha = 0.25, beta = 1.0;
  i64 m = 1, n = 8;

  // Derived: integer annulus radii. band_lo = ceil(beta*n + 1),
  // band_hi = floor(beta*n + alpha*n), both epsilon-guarded.
  i64 band_lo = 0, band_hi = 0;
  // Set when alpha*n <= 2m + 1: the window is too narrow to be guaranteed
  // a seed slot. Seeds may still exist; callers decide how to react.
  bool degenerate_seed_window = false;

  // Validates 1 <= s < d, m >= 0, n >= 1, alpha, beta > 0, and the hard
  // requirement beta*n > m (the seed core must sit strictly inside the
  // annulus).
  static GMGeometry make(int d, int s, double alpha, double beta, i64 m,
                         i64 n);

  // The ambient box B_{band_hi}, all axes free.
  LatticeSpec make_spec(ClassRule rule = ClassRule::DefectSublattice) const;

  bool in_band(const LatticeSpec& spec, i64 v) const;    // membership in S
  bool in_window(const LatticeSpec& spec, i64 v) const;  // membership in F

  // Window-seed centers: z in H with z + B_m^H contained in F, i.e.
  // z_1 in [band_lo + m, band_hi - m], z_j in [m, band_hi - m] for the
  // remaining in-plane axes. Returned in lexicographic coordinate order.
  std::vector<std::vector<i64>> seed_centers() const;
};

// Precomputed sets over the ambient box of one geometry. Build once, then
// evaluate per-sample counts against open-edge vectors from fill_open on
// `graph`. The spec lives on the heap so that `graph`'s back-pointer stays
// valid when a GMSets value moves.
struct GMSets {
  GMGeometry geo;
  std::shared_ptr<const LatticeSpec> spec_ptr;
  RegionGraph graph;  // full ambient box

  const LatticeSpec& spec() const { return *spec_ptr; }

  std::vector<i32> sources;     // B_m^H, local ids
  std::vector<i32> du_targets;  // dv(S) clipped to the box, local ids
  std::vector<i32> t_targets;   // T = dv(F) clipped to the box, local ids
  std::vector<unsigned char> band_mask;    // S membership by local id
  std::vector<unsigned char> window_mask;  // F membership by local id
  std::vector<unsigned char> t_mask;       // T membership by local id

  // One entry per seed center, in seed_centers() order: the graph edge
  // indices induced inside the translate, and its member vertices.
  std::vector<std::vector<i32>> seed_edges;
  std::vector<std::vector<i32>> seed_verts;

  // slot -> graph edge index, -1 where absent.
  std::vector<i32> edge_of_slot;

  static GMSets make(const GMGeometry& geo,
                     ClassRule rule = ClassRule::DefectSublattice);
};

// |U| for one sample: vertices of dv(S) joined to B_m^H by open paths
// avoiding S. `forest` is caller-owned scratch.
i64 gm_count_u(const GMSets& sets, const std::vector<unsigned char>& open,
               ClusterForest& forest);

// |V| for one sample: vertices of T joined to B_m^H by open paths
// avoiding F.
i64 gm_count_v(const GMSets& sets, const std::vector<unsigned char>& open,
               ClusterForest& forest);

// K for one sample: the T-vertices having an open edge into a window
// vertex covered by a fully open seed. Appends local ids into `out`
// (cleared first).
void gm_k_targets(const GMSets& sets, const std::vector<unsigned char>& open,
                  std::vector<i32>& out);

// Seed-reach indicator for one sample: B_m^H joined, inside the full box,
// to some T-vertex having an open edge into a seed-covered window vertex.
bool gm_seed_reach(const GMSets& sets, const std::vector<unsigned char>& open,
                   ClusterForest& forest);

}  // namespace perclab
