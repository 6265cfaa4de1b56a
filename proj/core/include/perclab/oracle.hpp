#pragma once
// Exact ground truth on tiny instances by complete enumeration of the
// 2^|E| edge configurations (|E| <= 24), plus exact inequality checks
// (positive association, disjoint occurrence) and the torus
// mass-transport balance in exact and Monte-Carlo modes.
//
// A configuration is a u32 bitmask: bit i set <=> edge i open. Weights
// multiply per-edge Bernoulli factors; sums use Kahan compensation.

#include <functional>
#include <utility>
#include <vector>

#include "perclab/clusters.hpp"
#include "perclab/common.hpp"
#include "perclab/field.hpp"
#include "perclab/lattice.hpp"

namespace perclab {

struct TinyEdge {
  int a = 0, b = 0;     // endpoint ids in 0..nv-1
  double thr = 0.5;     // open probability
  EdgeClass cls = EdgeClass::Bulk;
};

struct TinyInstance {
  int nv = 0;
  std::vector<TinyEdge> edges;

  int ne() const { return static_cast<int>(edges.size()); }
  void validate() const;

  // Re-resolve every edge threshold from its class.
  void set_params(const ParamPoint& pt);

  // Snapshot of a region graph with thresholds resolved from `pt`.
  // Endpoint ids are the graph's local ids.
  static TinyInstance from_graph(const RegionGraph& g, const ParamPoint& pt);
};

using ConfigEvent = std::function<bool(u32)>;
using ConfigFunctional = std::function<double(u32)>;

// Product-weight enumerator: sum over all configurations of
// weight(config) * f(config).
double exact_expected(const TinyInstance& inst, const ConfigFunctional& f);
double exact_probability(const TinyInstance& inst, const ConfigEvent& event);

// Independent cross-check enumerator: recursive branch on each edge with a
// running weight (different summation structure and order).
double exact_expected_branching(const TinyInstance& inst,
                                const ConfigFunctional& f);

// Event/functional helpers over a configuration.
bool config_connects(const TinyInstance& inst, u32 cfg, int a, int b);
bool config_connects_to_set(const TinyInstance& inst, u32 cfg, int a,
                            const std::vector<int>& target);
double config_cluster_size(const TinyInstance& inst, u32 cfg, int v);

// Exhaustive monotonicity check: event never flips 1 -> 0 when an edge
// opens.
bool event_is_increasing(const TinyInstance& inst, const ConfigEvent& event);

struct InequalityReport {
  double lhs = 0.0, rhs = 0.0;
  bool holds = false;
  bool inputs_monotone = true;  // flagged, never fatal
};

// Positive-association check: lhs = E[fg], rhs = E[f]E[g],
// holds <=> lhs >= rhs - tol.
InequalityReport verify_fkg(const TinyInstance& inst, const ConfigEvent& f,
                            const ConfigEvent& g);

// Disjoint-occurrence check for increasing events: lhs = P(A o B) computed
// by witness-set enumeration (disjoint open witness sets W_A, W_B with the
// configuration "only W_A open" in A and "open minus W_A" in B), rhs =
// P(A)P(B), holds <=> lhs <= rhs + tol.
InequalityReport verify_bk(const TinyInstance& inst, const ConfigEvent& A,
                           const ConfigEvent& B);

// ---------------------------------------------------------------------------
// Mass-transport balance on a torus.
//
// The transport evaluator returns, for one open-edge configuration,
//   first  = sum over y of m(x0, y, omega)
//   second = sum over y of m(y, x0, omega)
// where x0 is the canonical base vertex (the first sublattice vertex of the
// graph). The check compares the two expectations.

using TransportSums = std::function<std::pair<double, double>(
    const RegionGraph&, const std::vector<unsigned char>& open)>;

struct TransportReport {
  double lhs = 0.0;    // E sum_y m(x0, y)
  double rhs = 0.0;    // E sum_y m(y, x0)
  double delta = 0.0;  // lhs - rhs (paired estimate in MC mode)
  double se = 0.0;     // stderr of delta (MC mode; 0 in exact mode)
  i64 n = 0;           // samples (MC mode) or configurations (exact mode)
};

// Exact mode: |E| of the torus graph must be <= 24.
TransportReport mass_transport_check_exact(const LatticeSpec& spec,
                                           const ParamPoint& pt,
                                           const TransportSums& m);

// Monte-Carlo mode: paired per-sample differences.
TransportReport mass_transport_check_mc(const LatticeSpec& spec,
                                        const ParamPoint& pt,
                                        const TransportSums& m, i64 n_samples,
                                        u64 seed, int workers = 1);

// Shipped transport functions.
//   same-cluster: m(x,y) = 1{x and y lie in one open cluster}; symmetric,
//   so the two sums agree configuration by configuration.
std::pair<double, double> transport_same_cluster(
    const RegionGraph& g, const std::vector<unsigned char>& open);
//   nearest-sublattice: for x, y both sublattice vertices, m(x,y) = 1{y is
//   the unique sublattice vertex outside the open cluster of x closest to
//   that cluster in wrapped L-infinity distance}; genuinely asymmetric,
//   balanced only in expectation (under translations along the periodic
//   in-plane axes).
std::pair<double, double> transport_nearest_h(
    const RegionGraph& g, const std::vector<unsigned char>& open);

// All increasing indicator events on `ne` edges (ne <= 5), each given by its
// truth table over the 2^ne configurations, constants included. Used for
// exhaustive inequality sweeps; the count for ne = 4 is 168.
std::vector<std::vector<unsigned char>> all_monotone_events(int ne);

}  // namespace perclab
