#include "perclab/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace perclab {

namespace {

struct HitPartial {
  i64 hits = 0;
  i64 n = 0;
  void merge(const HitPartial& o) {
    hits += o.hits;
    n += o.n;
  }
};

i64 ipow(i64 b, int e) {
  i64 r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

EstimateRecord base_record(const LatticeSpec& spec, const ParamPoint& pt,
                           const std::string& name, i64 n, u64 seed) {
  EstimateRecord r;
  r.event = name;
  r.d = spec.d();
  r.s = spec.s();
  r.L = spec.axis(0).extent();
  r.N = -1;
  r.p = pt.p;
  r.q = pt.q;
  r.n = n;
  r.seed = seed;
  return r;
}

void set_indicator_stats(EstimateRecord& r, i64 hits, i64 n) {
  r.n = n;
  r.mean = n > 0 ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  r.se = n > 0 ? std::sqrt(r.mean * (1.0 - r.mean) / static_cast<double>(n))
               : 0.0;
}

}  // namespace

EstimateRecord estimate_event(const LatticeSpec& spec, const ParamPoint& pt,
                              const std::string& name, const EventFn& event,
                              i64 n_samples, u64 seed, int workers) {
  PERCLAB_REQUIRE(n_samples >= 1, "sample count must be >= 1");
  pt.validate();
  const RegionGraph g = build_region_graph(spec, spec.full_region());
  auto total = run_mc_partials<HitPartial>(
      n_samples, McOptions{workers, 64},
      [&](i64 begin, i64 end, HitPartial& out) {
        std::vector<unsigned char> open;
        ClusterForest forest;
        for (i64 i = begin; i < end; ++i) {
          UniformField f(seed, static_cast<u64>(i));
          fill_open(g, f, pt, open);
          SampleView view{g, open, forest};
          if (event(view)) ++out.hits;
          ++out.n;
        }
      });
  EstimateRecord r = base_record(spec, pt, name, n_samples, seed);
  set_indicator_stats(r, total.hits, total.n);
  return r;
}

EstimateRecord estimate_value(const LatticeSpec& spec, const ParamPoint& pt,
                              const std::string& name, const ValueFn& score,
                              i64 n_samples, u64 seed, int workers) {
  PERCLAB_REQUIRE(n_samples >= 1, "sample count must be >= 1");
  pt.validate();
  const RegionGraph g = build_region_graph(spec, spec.full_region());
  Accumulator acc = run_mc_partials<Accumulator>(
      n_samples, McOptions{workers, 64},
      [&](i64 begin, i64 end, Accumulator& out) {
        std::vector<unsigned char> open;
        ClusterForest forest;
        for (i64 i = begin; i < end; ++i) {
          UniformField f(seed, static_cast<u64>(i));
          fill_open(g, f, pt, open);
          SampleView view{g, open, forest};
          out.add(score(view));
        }
      });
  EstimateRecord r = base_record(spec, pt, name, n_samples, seed);
  r.mean = acc.mean();
  r.se = acc.stderr_of_mean();
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct ArmPartial {
  std::vector<i64> hits;
  i64 n = 0;
  void merge(const ArmPartial& o) {
    if (o.hits.empty()) return;
    if (hits.empty()) hits.assign(o.hits.size(), 0);
    for (size_t j = 0; j < hits.size(); ++j) hits[j] += o.hits[j];
    n += o.n;
  }
};

}  // namespace

OneArmProfile one_arm_profile(const LatticeSpec& spec, const ParamPoint& pt,
                              const std::vector<i64>& v,
                              const std::vector<i64>& m_list, i64 n_samples,
                              u64 seed, int workers) {
  PERCLAB_REQUIRE(n_samples >= 1, "sample count must be >= 1");
  PERCLAB_REQUIRE(!m_list.empty(), "radius list must not be empty");
  PERCLAB_REQUIRE(static_cast<int>(v.size()) == spec.d(),
                  "profile center must have dimension d");
  pt.validate();
  i64 mmax = 0;
  for (i64 m : m_list) {
    PERCLAB_REQUIRE(m >= 0, "profile radii must be nonnegative");
    mmax = std::max(mmax, m);
  }
  for (int a = 0; a < spec.d(); ++a) {
    PERCLAB_REQUIRE(
        v[a] - mmax >= spec.axis(a).lo && v[a] + mmax <= spec.axis(a).hi,
        "profile ball must fit inside the lattice");
  }

  const RegionGraph g = build_region_graph(spec, Region::ball(v, mmax));
  const i32 center = g.local_of(spec.vertex_index(v));
  PERCLAB_CHECK(center >= 0, "profile center missing from its own ball");

  // L-infinity distance from the center, per local id. The cluster of the
  // center inside B_mmax reaches distance >= m exactly when the one-arm
  // event to the sphere of radius m holds inside B_m: the first-hit prefix
  // of any witnessing path stays inside B_m.
  std::vector<i64> dist(static_cast<size_t>(g.vcount()), 0);
  {
    std::vector<i64> c(static_cast<size_t>(spec.d()));
    for (i32 i = 0; i < g.vcount(); ++i) {
      spec.vertex_coords(g.vertices[static_cast<size_t>(i)], c);
      i64 dd = 0;
      for (int a = 0; a < spec.d(); ++a) {
        i64 diff = c[a] - v[a];
        if (diff < 0) diff = -diff;
        dd = std::max(dd, diff);
      }
      dist[static_cast<size_t>(i)] = dd;
    }
  }

  const size_t nm = m_list.size();
  auto total = run_mc_partials<ArmPartial>(
      n_samples, McOptions{workers, 64},
      [&](i64 begin, i64 end, ArmPartial& out) {
        out.hits.assign(nm, 0);
        std::vector<unsigned char> open;
        ClusterForest forest;
        for (i64 i = begin; i < end; ++i) {
          UniformField f(seed, static_cast<u64>(i));
          fill_open(g, f, pt, open);
          build_forest(g, open, forest);
          const i32 root = forest.find(center);
          i64 rstar = 0;
          for (i32 w = 0; w < g.vcount(); ++w) {
            if (forest.find(w) == root)
              rstar = std::max(rstar, dist[static_cast<size_t>(w)]);
          }
          for (size_t j = 0; j < nm; ++j)
            if (rstar >= m_list[j]) ++out.hits[j];
          ++out.n;
        }
      });

  OneArmProfile prof;
  for (size_t j = 0; j < nm; ++j) {
    EstimateRecord r = base_record(spec, pt, "one_arm", n_samples, seed);
    r.L = m_list[j];
    set_indicator_stats(r, total.hits[j], total.n);
    prof.points.push_back(r);
  }

  // Least-squares fit of -log(mean) against m over the radii with hits.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  i64 k = 0;
  std::vector<double> xs, ys;
  for (size_t j = 0; j < nm; ++j) {
    if (total.hits[j] <= 0) {
      prof.dropped.push_back(m_list[j]);
      continue;
    }
    double x = static_cast<double>(m_list[j]);
    double y = -std::log(prof.points[j].mean);
    xs.push_back(x);
    ys.push_back(y);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++k;
  }
  double denom = static_cast<double>(k) * sxx - sx * sx;
  if (k < 2 || denom == 0.0) {
    prof.degenerate = true;
    return prof;
  }
  prof.lambda_hat = (static_cast<double>(k) * sxy - sx * sy) / denom;
  prof.intercept = (sy - prof.lambda_hat * sx) / static_cast<double>(k);
  double ybar = sy / static_cast<double>(k);
  double ss_res = 0, ss_tot = 0;
  for (size_t j = 0; j < xs.size(); ++j) {
    double fit = prof.intercept + prof.lambda_hat * xs[j];
    ss_res += (ys[j] - fit) * (ys[j] - fit);
    ss_tot += (ys[j] - ybar) * (ys[j] - ybar);
  }
  prof.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
  return prof;
}

// ---------------------------------------------------------------------------

EstimateRecord crossing_probability(const LatticeSpec& spec,
                                    const ParamPoint& pt, int axis,
                                    i64 n_samples, u64 seed, int workers) {
  PERCLAB_REQUIRE(axis >= 0 && axis < spec.d(), "crossing axis out of range");
  PERCLAB_REQUIRE(spec.axis(axis).bc == Bc::Free,
                  "crossing requested along a periodic axis");
  EventFn ev = [axis](SampleView& sv) {
    build_forest(sv.g, sv.open, sv.forest);
    return count_spanning_clusters(sv.g, sv.forest, axis) >= 1;
  };
  return estimate_event(spec, pt, "crossing", ev, n_samples, seed, workers);
}

// ---------------------------------------------------------------------------

namespace {

struct BisectPass {
  double q_hat = 0.0;
  double lo = 0.0, hi = 1.0;
  bool hit_lower = false, hit_upper = false;
  std::vector<BisectStep> steps;
};

// Crossing mean at q over samples [0, n). The field is shared across q
// values (same master seed, same sample indices), so per-sample crossing
// indicators are monotone along the bisection.
void eval_crossing(const RegionGraph& g, double p, double q, int axis,
                   i64 n, u64 seed, int workers, double& mean, double& se) {
  const ParamPoint pt(p, q);
  auto total = run_mc_partials<HitPartial>(
      n, McOptions{workers, 64}, [&](i64 begin, i64 end, HitPartial& out) {
        std::vector<unsigned char> open;
        ClusterForest forest;
        for (i64 i = begin; i < end; ++i) {
          UniformField f(seed, static_cast<u64>(i));
          fill_open(g, f, pt, open);
          build_forest(g, open, forest);
          if (count_spanning_clusters(g, forest, axis) >= 1) ++out.hits;
          ++out.n;
        }
      });
  mean = total.n > 0
             ? static_cast<double>(total.hits) / static_cast<double>(total.n)
             : 0.0;
  se = total.n > 0
           ? std::sqrt(mean * (1.0 - mean) / static_cast<double>(total.n))
           : 0.0;
}

BisectPass bisect_pass(const LatticeSpec& spec, double p,
                       const BisectOptions& opt, u64 seed) {
  PERCLAB_REQUIRE(opt.tol > 0.0, "bisection tolerance must be positive");
  PERCLAB_REQUIRE(opt.samples_per_step >= 1, "samples per step must be >= 1");
  PERCLAB_REQUIRE(opt.doubling_cap >= 0, "doubling cap must be >= 0");
  PERCLAB_REQUIRE(opt.axis >= 0 && opt.axis < spec.d(),
                  "crossing axis out of range");
  PERCLAB_REQUIRE(spec.axis(opt.axis).bc == Bc::Free,
                  "crossing requested along a periodic axis");
  const RegionGraph g = build_region_graph(spec, spec.full_region());

  BisectPass pass;
  // Evaluate at a fixed q, doubling the sample count while the 95% CI
  // straddles 1/2 (up to the cap), so decisions near the threshold are not
  // random-walk noise.
  auto measure = [&](double q) {
    BisectStep st;
    i64 nstep = opt.samples_per_step;
    const i64 ncap = opt.samples_per_step << opt.doubling_cap;
    for (;;) {
      eval_crossing(g, p, q, opt.axis, nstep, seed, opt.workers, st.mean,
                    st.se);
      st.n = nstep;
      if (std::fabs(st.mean - 0.5) > 1.96 * st.se || nstep >= ncap) break;
      nstep = std::min(ncap, nstep * 2);
    }
    st.q = q;
    return st;
  };

  BisectStep st0 = measure(0.0);
  st0.lo = 0.0;
  st0.hi = 1.0;
  pass.steps.push_back(st0);
  if (st0.mean > 0.5) {
    pass.hit_lower = true;
    pass.q_hat = 0.0;
    pass.lo = pass.hi = 0.0;
    return pass;
  }
  BisectStep st1 = measure(1.0);
  st1.lo = 0.0;
  st1.hi = 1.0;
  pass.steps.push_back(st1);
  if (st1.mean < 0.5) {
    pass.hit_upper = true;
    pass.q_hat = 1.0;
    pass.lo = pass.hi = 1.0;
    return pass;
  }

  double lo = 0.0, hi = 1.0;
  while (hi - lo > opt.tol) {
    const double mid = 0.5 * (lo + hi);
    BisectStep st = measure(mid);
    if (st.mean >= 0.5)
      hi = mid;
    else
      lo = mid;
    st.lo = lo;
    st.hi = hi;
    pass.steps.push_back(st);
  }
  pass.lo = lo;
  pass.hi = hi;
  pass.q_hat = 0.5 * (lo + hi);
  return pass;
}

BisectResult bisect_with_spec(
    const std::function<LatticeSpec(i64)>& spec_of_extent, double p, i64 L,
    const BisectOptions& opt, u64 seed, const std::string& event_name,
    i64 slab_n) {
  PERCLAB_REQUIRE(p >= 0.0 && p <= 1.0, "p must lie in [0,1]");
  PERCLAB_REQUIRE(L >= 2, "bisection box extent must be >= 2");
  BisectResult res;
  res.L = L;

  const LatticeSpec spec = spec_of_extent(L);
  BisectPass pass = bisect_pass(spec, p, opt, seed);
  res.q_hat = pass.q_hat;
  res.lo = pass.lo;
  res.hi = pass.hi;
  res.hit_lower = pass.hit_lower;
  res.hit_upper = pass.hit_upper;
  res.steps = std::move(pass.steps);

  if (opt.with_drift && !res.hit_lower && !res.hit_upper) {
    const i64 ld = std::max<i64>(8, L / 2);
    const LatticeSpec spec_d = spec_of_extent(ld);
    BisectPass drift = bisect_pass(spec_d, p, opt, seed ^ 0x9E3779B97F4A7C15ull);
    res.L_drift = ld;
    res.q_hat_drift = drift.q_hat;
    res.drift = std::fabs(res.q_hat - drift.q_hat);
  }

  EstimateRecord r =
      base_record(spec, ParamPoint(p, res.q_hat), event_name, 0, seed);
  r.L = L;
  r.N = slab_n;
  r.mean = res.q_hat;
  r.se = 0.5 * (res.hi - res.lo);
  i64 total_n = 0;
  for (const BisectStep& st : res.steps) total_n += st.n;
  r.n = total_n;
  res.record = r;
  return res;
}

}  // namespace

BisectResult bisect_critical_q(int d, int s, ClassRule rule, double p, i64 L,
                               const BisectOptions& opt, u64 seed) {
  auto make = [d, s, rule](i64 len) {
    return LatticeSpec::slab(d, s, len, (len - 1) / 2, Bc::Free, rule);
  };
  return bisect_with_spec(make, p, L, opt, seed, "bisect_critical_q", -1);
}

BisectResult slab_critical_curve(int d, int s, double p, i64 L, i64 N,
                                 const BisectOptions& opt, u64 seed,
                                 ClassRule rule) {
  PERCLAB_REQUIRE(N >= 0, "slab half-thickness must be >= 0");
  auto make = [d, s, N, rule](i64 len) {
    return LatticeSpec::slab(d, s, len, N, Bc::Free, rule);
  };
  return bisect_with_spec(make, p, L, opt, seed, "slab_critical_curve", N);
}

// ---------------------------------------------------------------------------

Certificate subcritical_certificate(int d, int s, ClassRule rule,
                                    const ParamPoint& pt, i64 L, i64 n_samples,
                                    u64 seed, int workers) {
  PERCLAB_REQUIRE(L >= 1, "certificate scale L must be >= 1");
  PERCLAB_REQUIRE(n_samples >= 1, "sample count must be >= 1");
  pt.validate();

  Certificate cert;
  cert.L = L;
  for (i64 m = 1; m <= L; ++m) {
    const i64 sphere = ipow(2 * m + 1, d) - ipow(2 * m - 1, d);
    const double ratio =
        static_cast<double>(sphere) / std::pow(static_cast<double>(m), d);
    cert.k_prime = std::max(cert.k_prime, ratio);
  }
  const double scale = cert.k_prime * std::pow(static_cast<double>(L), d);
  const u32 face_mask = (1u << (2 * d)) - 1;

  cert.holds = true;
  for (i64 j = 0; j <= L; ++j) {
    std::vector<i64> c(static_cast<size_t>(d), 0);
    c[static_cast<size_t>(d - 1)] = j;
    const LatticeSpec spec = LatticeSpec::box_at(d, s, c, L, rule);
    const RegionGraph g = build_region_graph(spec, spec.full_region());
    const i32 center = g.local_of(spec.vertex_index(c));
    PERCLAB_CHECK(center >= 0, "certificate center missing from its box");

    Accumulator acc = run_mc_partials<Accumulator>(
        n_samples, McOptions{workers, 64},
        [&](i64 begin, i64 end, Accumulator& out) {
          std::vector<unsigned char> open;
          ClusterForest forest;
          for (i64 i = begin; i < end; ++i) {
            UniformField f(seed, static_cast<u64>(i));
            fill_open(g, f, pt, open);
            build_forest(g, open, forest);
            const i32 root = forest.find(center);
            i64 cnt = 0;
            for (i32 w = 0; w < g.vcount(); ++w) {
              if ((g.vflags[static_cast<size_t>(w)] & face_mask) &&
                  forest.find(w) == root)
                ++cnt;
            }
            out.add(static_cast<double>(cnt));
          }
        });

    EstimateRecord r = base_record(
        spec, pt, "phi@" + fmt_int(j), n_samples, seed);
    r.L = L;
    r.mean = scale * acc.mean();
    r.se = scale * acc.stderr_of_mean();
    if (r.ci_hi() >= 0.5) cert.holds = false;
    cert.phi.push_back(std::move(r));
  }
  return cert;
}

// ---------------------------------------------------------------------------

EstimateRecord gm_seed_event(int d, int s, ClassRule rule,
                             const ParamPoint& pt, const GMEventSpec& ev,
                             i64 n_samples, u64 seed, int workers) {
  PERCLAB_REQUIRE(
      ev.kind != GMEventKind::FiniteSizeConditional,
      "the finite_size_conditional kind has a dedicated estimator");
  PERCLAB_REQUIRE(n_samples >= 1, "sample count must be >= 1");
  pt.validate();
  const GMGeometry geo = GMGeometry::make(d, s, ev.alpha, ev.beta, ev.m, ev.n);
  const GMSets sets = GMSets::make(geo, rule);
  const RegionGraph& g = sets.graph;

  EstimateRecord r;
  if (ev.kind == GMEventKind::SeedReach) {
    auto total = run_mc_partials<HitPartial>(
        n_samples, McOptions{workers, 64},
        [&](i64 begin, i64 end, HitPartial& out) {
          std::vector<unsigned char> open;
          ClusterForest forest;
          for (i64 i = begin; i < end; ++i) {
            UniformField f(seed, static_cast<u64>(i));
            fill_open(g, f, pt, open);
            if (gm_seed_reach(sets, open, forest)) ++out.hits;
            ++out.n;
          }
        });
    r = base_record(sets.spec(), pt, "gm_seed_reach", n_samples, seed);
    set_indicator_stats(r, total.hits, total.n);
  } else {
    const bool u_kind = ev.kind == GMEventKind::UCount;
    Accumulator acc = run_mc_partials<Accumulator>(
        n_samples, McOptions{workers, 64},
        [&](i64 begin, i64 end, Accumulator& out) {
          std::vector<unsigned char> open;
          ClusterForest forest;
          for (i64 i = begin; i < end; ++i) {
            UniformField f(seed, static_cast<u64>(i));
            fill_open(g, f, pt, open);
            const i64 cnt = u_kind ? gm_count_u(sets, open, forest)
                                   : gm_count_v(sets, open, forest);
            out.add(static_cast<double>(cnt));
          }
        });
    r = base_record(sets.spec(), pt, u_kind ? "gm_u_count" : "gm_v_count",
                    n_samples, seed);
    r.mean = acc.mean();
    r.se = acc.stderr_of_mean();
  }
  r.L = geo.band_hi;
  return r;
}

// ---------------------------------------------------------------------------

FiniteSizeContext FiniteSizeContext::make(
    int d, int s, ClassRule rule, const ParamPoint& pt, const GMEventSpec& ev,
    const Region& r_region, const std::function<double(i64)>& gamma_of_slot,
    double delta) {
  PERCLAB_REQUIRE(ev.kind == GMEventKind::FiniteSizeConditional,
                  "event kind must be finite_size_conditional");
  PERCLAB_REQUIRE(delta >= 0.0 && delta <= 1.0, "delta must lie in [0,1]");
  pt.validate();
  const GMGeometry geo = GMGeometry::make(d, s, ev.alpha, ev.beta, ev.m, ev.n);

  FiniteSizeContext ctx;
  ctx.sets = GMSets::make(geo, rule);
  ctx.r_region = r_region;
  ctx.pt = pt;
  ctx.delta = delta;
  const LatticeSpec& spec = ctx.sets.spec();
  const RegionGraph& g = ctx.sets.graph;

  PERCLAB_REQUIRE(r_region.dim() == d, "R must have dimension d");
  const Region core =
      sublattice_box(spec, std::vector<i64>(static_cast<size_t>(d), 0), geo.m);
  PERCLAB_REQUIRE(core.subset_of(r_region),
                  "R must contain the sublattice seed core");
  PERCLAB_REQUIRE(r_region.subset_of(spec.full_region()),
                  "R must lie inside the ambient box");

  ctx.r_mask.assign(static_cast<size_t>(g.vcount()), 0);
  std::vector<i64> r_lattice;
  {
    std::vector<i64> c(static_cast<size_t>(d));
    for (i32 i = 0; i < g.vcount(); ++i) {
      spec.vertex_coords(g.vertices[static_cast<size_t>(i)], c);
      if (r_region.contains(c)) {
        ctx.r_mask[static_cast<size_t>(i)] = 1;
        r_lattice.push_back(g.vertices[static_cast<size_t>(i)]);
      }
    }
  }

  // Separation hypothesis: neither R nor its vertex boundary may meet the
  // target shell T.
  for (i32 t : ctx.sets.t_targets) {
    PERCLAB_REQUIRE(!ctx.r_mask[static_cast<size_t>(t)],
                    "R meets the target shell T");
    const i64 lat = g.vertices[static_cast<size_t>(t)];
    for (int a = 0; a < d; ++a) {
      for (int dir = -1; dir <= 1; dir += 2) {
        const i64 w = spec.neighbor(lat, a, dir);
        if (w < 0) continue;
        const i32 wl = g.local_of(w);
        PERCLAB_REQUIRE(wl < 0 || !ctx.r_mask[static_cast<size_t>(wl)],
                        "the vertex boundary of R meets the target shell T");
      }
    }
  }

  const BoundarySets bs = boundary_sets(spec, r_lattice);
  for (i64 slot : bs.exterior_e) {
    const i32 eidx = ctx.sets.edge_of_slot[static_cast<size_t>(slot)];
    PERCLAB_CHECK(eidx >= 0, "boundary edge slot missing from the box graph");
    const double gval = gamma_of_slot(slot);
    PERCLAB_REQUIRE(gval >= 0.0 && gval <= 1.0 - delta,
                    "gamma(f) must lie in [0, 1-delta]");
    PERCLAB_REQUIRE(gval < 1.0,
                    "gamma(f) must be below 1 for the conditioning event to "
                    "have positive probability");
    const RegionEdge& ed = g.edges[static_cast<size_t>(eidx)];
    PERCLAB_CHECK(ctx.r_mask[static_cast<size_t>(ed.a)] !=
                      ctx.r_mask[static_cast<size_t>(ed.b)],
                  "boundary edge must straddle R");
    ctx.boundary_edges.push_back(eidx);
    ctx.gamma.push_back(gval);
    ctx.boundary_outside.push_back(
        ctx.r_mask[static_cast<size_t>(ed.a)] ? ed.b : ed.a);
  }
  return ctx;
}

bool FiniteSizeContext::event_core(const UniformField& f, bool conditioned,
                                   Scratch& ws) const {
  const RegionGraph& g = sets.graph;
  fill_open(g, f, pt, ws.open);

  // Resolve the boundary edges: their percolation status enters the
  // configuration (K is computed from it), and the boost indicator decides
  // whether they can serve as the path's single boundary crossing.
  ws.boost.assign(boundary_edges.size(), 0);
  for (size_t i = 0; i < boundary_edges.size(); ++i) {
    const i32 e = boundary_edges[i];
    const RegionEdge& ed = g.edges[static_cast<size_t>(e)];
    double u = f.u(ed.slot);
    if (conditioned) u = resample_conditionally_closed(u, gamma[i]);
    ws.open[static_cast<size_t>(e)] = u < threshold(ed.cls, pt) ? 1 : 0;
    ws.boost[i] = u < gamma[i] + delta ? 1 : 0;
  }

  gm_k_targets(sets, ws.open, ws.k_targets);
  if (ws.k_targets.empty()) return false;

  // Open paths that avoid R entirely: drop every edge incident to R (the
  // boundary edges included), then ask whether the outside endpoint of a
  // boost-open boundary edge shares a component with K.
  ws.forest.reset(g.vcount());
  for (size_t e = 0; e < g.edges.size(); ++e) {
    if (!ws.open[e]) continue;
    const RegionEdge& ed = g.edges[e];
    if (r_mask[static_cast<size_t>(ed.a)] || r_mask[static_cast<size_t>(ed.b)])
      continue;
    ws.forest.unite(ed.a, ed.b);
  }
  std::unordered_set<i32> k_roots;
  for (i32 t : ws.k_targets) k_roots.insert(ws.forest.find(t));
  for (size_t i = 0; i < boundary_edges.size(); ++i) {
    if (!ws.boost[i]) continue;
    if (k_roots.count(ws.forest.find(boundary_outside[i]))) return true;
  }
  return false;
}

bool FiniteSizeContext::event_conditional(const UniformField& f,
                                          Scratch& ws) const {
  return event_core(f, true, ws);
}

bool FiniteSizeContext::event_raw(const UniformField& f, Scratch& ws) const {
  return event_core(f, false, ws);
}

bool FiniteSizeContext::f_all_closed(const UniformField& f) const {
  const RegionGraph& g = sets.graph;
  for (size_t i = 0; i < boundary_edges.size(); ++i) {
    const RegionEdge& ed = g.edges[static_cast<size_t>(boundary_edges[i])];
    if (f.u(ed.slot) < gamma[i]) return false;
  }
  return true;
}

EstimateRecord finite_size_conditional(
    int d, int s, ClassRule rule, const ParamPoint& pt, const GMEventSpec& ev,
    const Region& r_region, const std::function<double(i64)>& gamma_of_slot,
    double delta, i64 n_samples, u64 seed, int workers) {
  PERCLAB_REQUIRE(n_samples >= 1, "sample count must be >= 1");
  const FiniteSizeContext ctx = FiniteSizeContext::make(
      d, s, rule, pt, ev, r_region, gamma_of_slot, delta);

  auto total = run_mc_partials<HitPartial>(
      n_samples, McOptions{workers, 64},
      [&](i64 begin, i64 end, HitPartial& out) {
        FiniteSizeContext::Scratch ws;
        for (i64 i = begin; i < end; ++i) {
          UniformField f(seed, static_cast<u64>(i));
          if (ctx.event_conditional(f, ws)) ++out.hits;
          ++out.n;
        }
      });

  EstimateRecord r = base_record(ctx.sets.spec(), pt, "finite_size_conditional",
                                 n_samples, seed);
  r.L = ctx.sets.geo.band_hi;
  set_indicator_stats(r, total.hits, total.n);
  return r;
}

// ---------------------------------------------------------------------------

EstimateRecord trifurcation_mean(const LatticeSpec& spec, const ParamPoint& pt,
                                 const Region& region, i64 n_samples, u64 seed,
                                 int workers) {
  PERCLAB_REQUIRE(n_samples >= 1, "sample count must be >= 1");
  PERCLAB_REQUIRE(region.dim() == spec.d(), "region must have dimension d");
  pt.validate();
  const RegionGraph g = build_region_graph(spec, region);
  Accumulator acc = run_mc_partials<Accumulator>(
      n_samples, McOptions{workers, 64},
      [&](i64 begin, i64 end, Accumulator& out) {
        std::vector<unsigned char> open;
        TrifurcationScratch ws;
        for (i64 i = begin; i < end; ++i) {
          UniformField f(seed, static_cast<u64>(i));
          fill_open(g, f, pt, open);
          out.add(static_cast<double>(count_trifurcations(g, open, ws)));
        }
      });
  EstimateRecord r =
      base_record(spec, pt, "trifurcation_count", n_samples, seed);
  r.L = region.hi[0] - region.lo[0] + 1;
  r.mean = acc.mean();
  r.se = acc.stderr_of_mean();
  return r;
}

EstimateRecord boundary_h_ratio_mean(const LatticeSpec& spec,
                                     const ParamPoint& pt,
                                     const Region& region, i64 n_samples,
                                     u64 seed, int workers) {
  PERCLAB_REQUIRE(n_samples >= 1, "sample count must be >= 1");
  PERCLAB_REQUIRE(region.dim() == spec.d(), "region must have dimension d");
  pt.validate();
  const RegionGraph g = build_region_graph(spec, region);
  Accumulator acc = run_mc_partials<Accumulator>(
      n_samples, McOptions{workers, 64},
      [&](i64 begin, i64 end, Accumulator& out) {
        std::vector<unsigned char> open;
        ClusterForest forest;
        BoundaryRatioScratch ws;
        for (i64 i = begin; i < end; ++i) {
          UniformField f(seed, static_cast<u64>(i));
          fill_open(g, f, pt, open);
          out.add(boundary_to_h_ratio(g, open, forest, ws));
        }
      });
  EstimateRecord r =
      base_record(spec, pt, "boundary_h_ratio", n_samples, seed);
  r.L = region.hi[0] - region.lo[0] + 1;
  r.mean = acc.mean();
  r.se = acc.stderr_of_mean();
  return r;
}

}  // namespace perclab
