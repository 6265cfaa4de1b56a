#pragma once
// Edge randomness: a counter-based uniform field over edge slots.
//
// Every edge e carries U(e) ~ Uniform[0,1) at 32-bit resolution, computed as
// a pure function of (master seed, sample index, edge slot) via
// Philox-4x32-10. No state, no order dependence: any worker can evaluate any
// edge of any sample, which is what makes the chunked deterministic
// reduction and the revealment bookkeeping reproducible.
//
// An edge is open at threshold r iff U(e) < r. The three model parameters
// (p, q, t) are attached to edge classes by `threshold`.

#include <cmath>
#include <unordered_map>

#include "perclab/common.hpp"
#include "perclab/lattice.hpp"

namespace perclab {

struct ParamPoint {
  double p = 0.5;  // bulk / upper half-space threshold
  double q = 0.5;  // defect-sublattice threshold
  double t = 0.5;  // lower half-space threshold (defaults to p)

  ParamPoint() = default;
  ParamPoint(double p_, double q_) : p(p_), q(q_), t(p_) {}
  ParamPoint(double p_, double q_, double t_) : p(p_), q(q_), t(t_) {}

  void validate() const {
    PERCLAB_REQUIRE(p >= 0.0 && p <= 1.0, "p must lie in [0,1]");
    PERCLAB_REQUIRE(q >= 0.0 && q <= 1.0, "q must lie in [0,1]");
    PERCLAB_REQUIRE(t >= 0.0 && t <= 1.0, "t must lie in [0,1]");
  }
  // Componentwise order: the coupling is monotone along it.
  bool dominated_by(const ParamPoint& o) const {
    return p <= o.p && q <= o.q && t <= o.t;
  }
};

inline double threshold(EdgeClass c, const ParamPoint& pt) {
  switch (c) {
    case EdgeClass::H: return pt.q;
    case EdgeClass::Bulk: return pt.p;
    case EdgeClass::Plus: return pt.p;
    case EdgeClass::Minus: return pt.t;
  }
  return 0.0;
}

namespace detail {

// Philox-4x32-10 block cipher (counter-based RNG).
struct Philox4x32 {
  static constexpr u32 M0 = 0xD2511F53u;
  static constexpr u32 M1 = 0xCD9E8D57u;
  static constexpr u32 W0 = 0x9E3779B9u;
  static constexpr u32 W1 = 0xBB67AE85u;

  static inline void round(u32 ctr[4], u32 k0, u32 k1) {
    u64 p0 = static_cast<u64>(M0) * ctr[0];
    u64 p1 = static_cast<u64>(M1) * ctr[2];
    u32 hi0 = static_cast<u32>(p0 >> 32), lo0 = static_cast<u32>(p0);
    u32 hi1 = static_cast<u32>(p1 >> 32), lo1 = static_cast<u32>(p1);
    u32 n0 = hi1 ^ ctr[1] ^ k0;
    u32 n1 = lo1;
    u32 n2 = hi0 ^ ctr[3] ^ k1;
    u32 n3 = lo0;
    ctr[0] = n0;
    ctr[1] = n1;
    ctr[2] = n2;
    ctr[3] = n3;
  }

  static inline void block(u32 ctr[4], u32 k0, u32 k1) {
    for (int r = 0; r < 10; ++r) {
      if (r > 0) {
        k0 += W0;
        k1 += W1;
      }
      round(ctr, k0, k1);
    }
  }
};

}  // namespace detail

class UniformField {
 public:
  UniformField(u64 master_seed, u64 sample_index)
      : seed_(master_seed), sample_(sample_index) {}

  u64 master_seed() const { return seed_; }
  u64 sample_index() const { return sample_; }

  u32 bits(i64 slot) const {
    u32 ctr[4] = {static_cast<u32>(slot), static_cast<u32>(static_cast<u64>(slot) >> 32),
                  static_cast<u32>(sample_), static_cast<u32>(sample_ >> 32)};
    detail::Philox4x32::block(ctr, static_cast<u32>(seed_),
                              static_cast<u32>(seed_ >> 32));
    return ctr[0];
  }

  // Uniform on the 2^-32 grid of [0, 1).
  double u(i64 slot) const { return bits(slot) * 0x1p-32; }

 private:
  u64 seed_ = 0;
  u64 sample_ = 0;
};

// Field view that conditions selected edges to be open below a given
// threshold: on those slots the value is rescaled into [0, thr), which is
// exactly the conditional law of U given {U < thr}. Used to force an initial
// seed configuration while keeping every other edge untouched.
template <class Base>
class ConditionedOpenField {
 public:
  ConditionedOpenField(const Base& base,
                       std::unordered_map<i64, double> open_below)
      : base_(&base), open_below_(std::move(open_below)) {}

  double u(i64 slot) const {
    double raw = base_->u(slot);
    auto it = open_below_.find(slot);
    if (it == open_below_.end()) return raw;
    return raw * it->second;
  }
  u32 bits(i64 slot) const { return base_->bits(slot); }

 private:
  const Base* base_;
  std::unordered_map<i64, double> open_below_;
};

template <class FieldT>
inline bool is_open(const FieldT& f, i64 slot, double thr) {
  return f.u(slot) < thr;
}

template <class FieldT>
inline bool is_open(const FieldT& f, const LatticeSpec& spec, i64 v, int a,
                    const ParamPoint& pt) {
  return f.u(spec.edge_slot(v, a)) < threshold(spec.classify_edge(v, a), pt);
}

// Law of U conditioned on {U > gamma}, realized as a measurable map of the
// unconditioned value: u' = gamma + (1-gamma) * (1-u) lies in (gamma, 1].
// Strictly above gamma for every grid value of u, so a (gamma+delta)-open
// outcome is impossible *exactly* when delta = 0.
inline double resample_conditionally_closed(double u_raw, double gamma) {
  PERCLAB_REQUIRE(gamma >= 0.0 && gamma < 1.0,
                  "conditional-closure level gamma must lie in [0,1)");
  PERCLAB_REQUIRE(u_raw >= 0.0 && u_raw < 1.0, "raw uniform must lie in [0,1)");
  return gamma + (1.0 - gamma) * (1.0 - u_raw);
}

}  // namespace perclab
