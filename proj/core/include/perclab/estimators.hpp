#pragma once
// Monte Carlo estimators over the lattice model: generic event/expectation
// estimation, one-arm decay profiles, face-to-face crossing probabilities,
// stochastic bisection for the critical curve q_c(p) (full box and slab),
// the subcritical certificate phi_v = K' L^d E|S_L(v)|, the seed-window
// events (|U|, |V|, seed reach), and the exactly-sampled conditional
// boost-edge probability P(E | every boundary edge gamma-closed).
//
// Every estimator is deterministic given its master seed and returns
// byte-identical results for any worker count.

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "perclab/clusters.hpp"
#include "perclab/common.hpp"
#include "perclab/engine.hpp"
#include "perclab/field.hpp"
#include "perclab/gmgeom.hpp"
#include "perclab/lattice.hpp"
#include "perclab/records.hpp"

namespace perclab {

inline double clamp01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

// One sample handed to a predicate or score: the dense region graph, the
// per-edge open indicators, and reusable (unbuilt) forest scratch.
struct SampleView {
  const RegionGraph& g;
  const std::vector<unsigned char>& open;
  ClusterForest& forest;
};

using EventFn = std::function<bool(SampleView&)>;
using ValueFn = std::function<double(SampleView&)>;

// Indicator mean over the full region of `spec`, with the binomial
// standard error sqrt(mean(1-mean)/n).
EstimateRecord estimate_event(const LatticeSpec& spec, const ParamPoint& pt,
                              const std::string& name, const EventFn& event,
                              i64 n_samples, u64 seed, int workers = 1);

// Real-valued per-sample score; standard error from the sample variance.
EstimateRecord estimate_value(const LatticeSpec& spec, const ParamPoint& pt,
                              const std::string& name, const ValueFn& score,
                              i64 n_samples, u64 seed, int workers = 1);

// ---------------------------------------------------------------------------
// One-arm profile: P(v <-> dB_m(v)) for each m, and the least-squares decay
// rate of -log(mean) against m. Radii with zero hits are dropped from the
// fit and listed; fewer than two usable points flags the fit degenerate.
struct OneArmProfile {
  std::vector<EstimateRecord> points;  // one per m; the L field carries m
  double lambda_hat = 0.0;             // fitted slope
  double intercept = 0.0;
  double r2 = 0.0;
  bool degenerate = false;
  std::vector<i64> dropped;            // m values excluded from the fit
};

OneArmProfile one_arm_profile(const LatticeSpec& spec, const ParamPoint& pt,
                              const std::vector<i64>& v,
                              const std::vector<i64>& m_list, i64 n_samples,
                              u64 seed, int workers = 1);

// ---------------------------------------------------------------------------
// Probability that some open cluster joins the two opposite faces of
// `axis` (which must have free boundary conditions).
EstimateRecord crossing_probability(const LatticeSpec& spec,
                                    const ParamPoint& pt, int axis,
                                    i64 n_samples, u64 seed, int workers = 1);

// ---------------------------------------------------------------------------
// Stochastic bisection for the half-crossing point of q -> P(crossing).
struct BisectOptions {
  double tol = 0.02;           // final bracket width
  i64 samples_per_step = 2000; // per midpoint; doubled while the CI straddles 1/2
  int doubling_cap = 4;        // at most samples_per_step << doubling_cap
  int workers = 1;
  int axis = 0;                // crossing axis
  bool with_drift = true;      // re-run at L_drift = max(8, L/2)
};

struct BisectStep {
  double q = 0.0;
  double mean = 0.0, se = 0.0;
  i64 n = 0;
  double lo = 0.0, hi = 1.0;  // bracket after applying this evaluation
};

struct BisectResult {
  double q_hat = 0.0;
  double lo = 0.0, hi = 1.0;
  bool hit_lower = false;  // crossing already above 1/2 at q = 0
  bool hit_upper = false;  // crossing still below 1/2 at q = 1
  std::vector<BisectStep> steps;
  i64 L = 0;
  i64 L_drift = 0;  // 0 when the drift pass was not run
  double q_hat_drift = std::numeric_limits<double>::quiet_NaN();
  double drift = std::numeric_limits<double>::quiet_NaN();
  // Summary row: mean = q_hat, se = half the final bracket width.
  EstimateRecord record;
};

// q_c estimate on the (2*floor((L-1)/2)+1)-thick full box with in-plane
// extent L; crossing along opt.axis.
BisectResult bisect_critical_q(int d, int s, ClassRule rule, double p, i64 L,
                               const BisectOptions& opt, u64 seed);

// Same bisection on the slab of in-plane extent L and half-thickness N.
BisectResult slab_critical_curve(int d, int s, double p, i64 L, i64 N,
                                 const BisectOptions& opt, u64 seed,
                                 ClassRule rule = ClassRule::DefectSublattice);

// ---------------------------------------------------------------------------
// Subcritical certificate: phi_v = K' L^d E|S_L(v)| for one representative
// v per distance 0..L from the sublattice, where S_L(v) is the set of
// vertices at distance exactly L from v joined to v inside B_L(v), and K'
// is the smallest constant with |dB_m| <= K' m^d for 1 <= m <= L
// (computed exactly from the geometry). The certificate holds when every
// phi upper confidence bound is below 1/2.
struct Certificate {
  i64 L = 0;
  double k_prime = 0.0;
  bool holds = false;
  std::vector<EstimateRecord> phi;  // scaled means; L field = L, seed = master
};

Certificate subcritical_certificate(int d, int s, ClassRule rule,
                                    const ParamPoint& pt, i64 L, i64 n_samples,
                                    u64 seed, int workers = 1);

// ---------------------------------------------------------------------------
// Seed-window events on the ambient box of a GMGeometry.
enum class GMEventKind { UCount, VCount, SeedReach, FiniteSizeConditional };

struct GMEventSpec {
  double alpha = 0.25;
  double beta = 1.0;
  i64 m = 1;
  i64 n = 8;
  GMEventKind kind = GMEventKind::SeedReach;
};

// Estimates |U|, |V| (expectations) or the seed-reach indicator. The
// FiniteSizeConditional kind belongs to finite_size_conditional and is
// rejected here.
EstimateRecord gm_seed_event(int d, int s, ClassRule rule,
                             const ParamPoint& pt, const GMEventSpec& ev,
                             i64 n_samples, u64 seed, int workers = 1);

// ---------------------------------------------------------------------------
// Conditional boost-edge estimator. Given a box R with
//   B_m^H subset R subset B (the ambient box), and (R u dv(R)) disjoint
//   from the target shell T,
// a level map gamma on the edge boundary de(R) with values in [0, 1-delta],
// the estimator samples the law conditioned on every de(R) edge being
// gamma(f)-closed -- exactly, by drawing those edges from (gamma(f), 1] --
// and returns the probability that some path joins R to the seed-contact
// set K using one (gamma(f)+delta)-open boundary edge f followed by open
// edges that avoid R entirely.
struct FiniteSizeContext {
  GMSets sets;
  Region r_region;
  ParamPoint pt;
  double delta = 0.0;
  std::vector<unsigned char> r_mask;  // by local id
  std::vector<i32> boundary_edges;    // graph edge indices of de(R)
  std::vector<double> gamma;          // aligned with boundary_edges
  std::vector<i32> boundary_outside;  // non-R endpoint per boundary edge

  struct Scratch {
    std::vector<unsigned char> open;
    std::vector<unsigned char> boost;
    std::vector<i32> k_targets;
    ClusterForest forest;
  };

  static FiniteSizeContext make(int d, int s, ClassRule rule,
                                const ParamPoint& pt, const GMEventSpec& ev,
                                const Region& r_region,
                                const std::function<double(i64)>& gamma_of_slot,
                                double delta);

  // Event under the exact conditional draw (boundary edges resampled into
  // (gamma, 1]).
  bool event_conditional(const UniformField& f, Scratch& ws) const;
  // Event on the raw, unconditioned configuration.
  bool event_raw(const UniformField& f, Scratch& ws) const;
  // Raw conditioning indicator: every boundary edge gamma(f)-closed.
  bool f_all_closed(const UniformField& f) const;

 private:
  bool event_core(const UniformField& f, bool conditioned, Scratch& ws) const;
};

EstimateRecord finite_size_conditional(
    int d, int s, ClassRule rule, const ParamPoint& pt, const GMEventSpec& ev,
    const Region& r_region, const std::function<double(i64)>& gamma_of_slot,
    double delta, i64 n_samples, u64 seed, int workers = 1);

// ---------------------------------------------------------------------------
// Mean trifurcation count of the configuration restricted to `region`.
EstimateRecord trifurcation_mean(const LatticeSpec& spec, const ParamPoint& pt,
                                 const Region& region, i64 n_samples, u64 seed,
                                 int workers = 1);

// Mean of |C(dv B_{n-1}; H)| / |B_n cap H| over samples on `region`.
EstimateRecord boundary_h_ratio_mean(const LatticeSpec& spec,
                                     const ParamPoint& pt,
                                     const Region& region, i64 n_samples,
                                     u64 seed, int workers = 1);

}  // namespace perclab
