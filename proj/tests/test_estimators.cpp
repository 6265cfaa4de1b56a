// Estimator tests: frozen exact values for tiny instances, coupling and
// determinism invariants, CI coverage, bisection behavior at the
// boundaries, the certificate constant, seed-window events, and the
// conditional boost-edge sampler checked against a rejection oracle.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include <perclab/estimators.hpp>

using namespace perclab;

namespace {

// Two vertices joined by one sublattice edge: the open probability is q.
LatticeSpec single_edge_spec() { return LatticeSpec::slab(2, 1, 2, 0); }

EventFn edge_open_event() {
  return [](SampleView& sv) { return sv.open[0] != 0; };
}

// Origin joined to the region boundary (any face).
EventFn origin_to_boundary_event(std::vector<i64> origin) {
  return [origin](SampleView& sv) {
    build_forest(sv.g, sv.open, sv.forest);
    const i32 c = sv.g.local_of(sv.g.spec->vertex_index(origin));
    REQUIRE(c >= 0);
    const u32 fm = (1u << (2 * sv.g.spec->d())) - 1;
    return (sv.forest.flags_of(c) & fm) != 0u;
  };
}

double comb_se(const EstimateRecord& a, const EstimateRecord& b) {
  return std::sqrt(a.se * a.se + b.se * b.se);
}

}  // namespace

TEST_CASE("estimate_event: trivial, Bernoulli marginal, enumeration value") {
  const LatticeSpec spec = single_edge_spec();

  EventFn always = [](SampleView&) { return true; };
  EstimateRecord r1 = estimate_event(spec, ParamPoint(0.5, 0.5), "always",
                                     always, 500, 7);
  CHECK(r1.mean == 1.0);
  CHECK(r1.se == 0.0);
  CHECK(r1.n == 500);

  // Single sublattice edge: P(open) = q = 0.37.
  EstimateRecord r2 = estimate_event(spec, ParamPoint(0.5, 0.37), "edge",
                                     edge_open_event(), 20000, 12345);
  CHECK(std::fabs(r2.mean - 0.37) <= 4.0 * r2.se);
  CHECK(r2.se > 0.0);

  // Origin to the boundary of B_1 in the plane at (p,q) = (0.3, 0.6):
  // exact value 1 - (1-q)^2 (1-p)^2 = 0.9216.
  const LatticeSpec b1 = LatticeSpec::box(2, 1, 1);
  EstimateRecord r3 =
      estimate_event(b1, ParamPoint(0.3, 0.6), "theta",
                     origin_to_boundary_event({0, 0}), 20000, 99, 2);
  CHECK(std::fabs(r3.mean - 0.9216) <= 4.0 * r3.se);
}

TEST_CASE("estimate_event: byte-identical across worker counts") {
  const LatticeSpec b1 = LatticeSpec::box(2, 1, 2);
  EstimateRecord a =
      estimate_event(b1, ParamPoint(0.4, 0.7), "theta",
                     origin_to_boundary_event({0, 0}), 5000, 31, 1);
  EstimateRecord b =
      estimate_event(b1, ParamPoint(0.4, 0.7), "theta",
                     origin_to_boundary_event({0, 0}), 5000, 31, 4);
  EstimateRecord c =
      estimate_event(b1, ParamPoint(0.4, 0.7), "theta",
                     origin_to_boundary_event({0, 0}), 5000, 31, 16);
  CHECK(a.mean == b.mean);
  CHECK(a.se == b.se);
  CHECK(a.mean == c.mean);
  CHECK(a.se == c.se);
}

TEST_CASE("estimate_value: expected cluster size of the single edge") {
  const LatticeSpec spec = single_edge_spec();
  ValueFn size_of_origin = [](SampleView& sv) {
    build_forest(sv.g, sv.open, sv.forest);
    return static_cast<double>(sv.forest.size_of(0));
  };
  // E|C| = 1 + q = 1.3 at q = 0.3.
  EstimateRecord r = estimate_value(spec, ParamPoint(0.5, 0.3), "csize",
                                    size_of_origin, 20000, 4242);
  CHECK(std::fabs(r.mean - 1.3) <= 4.0 * r.se);
  CHECK(r.se > 0.0);
}

TEST_CASE("CI coverage on an exactly known probability") {
  const LatticeSpec spec = single_edge_spec();
  const double truth = 0.37;
  int covered = 0;
  for (u64 s = 0; s < 100; ++s) {
    EstimateRecord r = estimate_event(spec, ParamPoint(0.5, truth), "edge",
                                      edge_open_event(), 500, 1000 + s);
    const double lo = clamp01(r.ci_lo());
    const double hi = clamp01(r.ci_hi());
    CHECK(lo >= 0.0);
    CHECK(hi <= 1.0);
    if (truth >= lo && truth <= hi) ++covered;
  }
  CHECK(covered >= 85);
}

TEST_CASE("per-sample coupling monotonicity of the crossing indicator") {
  const LatticeSpec spec = LatticeSpec::box(2, 1, 4);
  const RegionGraph g = build_region_graph(spec, spec.full_region());
  const ParamPoint lo_pt(0.3, 0.4), hi_pt(0.5, 0.62);
  std::vector<unsigned char> open_lo, open_hi;
  ClusterForest forest;
  for (u64 i = 0; i < 200; ++i) {
    UniformField f(777, i);
    fill_open(g, f, lo_pt, open_lo);
    fill_open(g, f, hi_pt, open_hi);
    for (size_t e = 0; e < open_lo.size(); ++e) {
      CHECK(open_lo[e] <= open_hi[e]);  // inclusion of configurations
    }
    build_forest(g, open_lo, forest);
    const bool cross_lo = count_spanning_clusters(g, forest, 0) >= 1;
    build_forest(g, open_hi, forest);
    const bool cross_hi = count_spanning_clusters(g, forest, 0) >= 1;
    CHECK(static_cast<int>(cross_lo) <= static_cast<int>(cross_hi));
  }
}

TEST_CASE("one_arm_profile: saturated, empty, and subcritical fits") {
  const LatticeSpec spec = LatticeSpec::box(2, 1, 10);
  const std::vector<i64> v = {0, 0};
  const std::vector<i64> ms = {2, 4, 6, 8};

  OneArmProfile full =
      one_arm_profile(spec, ParamPoint(1.0, 1.0), v, ms, 200, 5);
  REQUIRE(full.points.size() == ms.size());
  for (const auto& r : full.points) CHECK(r.mean == 1.0);
  CHECK(!full.degenerate);
  CHECK(full.lambda_hat == 0.0);
  CHECK(full.r2 == 1.0);

  OneArmProfile empty =
      one_arm_profile(spec, ParamPoint(0.0, 0.0), v, ms, 200, 5);
  CHECK(empty.degenerate);
  CHECK(empty.dropped.size() == ms.size());

  OneArmProfile sub =
      one_arm_profile(spec, ParamPoint(0.3, 0.3), v, ms, 6000, 21, 2);
  CHECK(!sub.degenerate);
  CHECK(sub.lambda_hat > 0.0);
  CHECK(sub.r2 >= 0.9);
  for (size_t j = 1; j < sub.points.size(); ++j)
    CHECK(sub.points[j].mean <= sub.points[j - 1].mean);

  // m = 0 is always reached.
  OneArmProfile zero =
      one_arm_profile(spec, ParamPoint(0.2, 0.2), v, {0, 3}, 300, 9);
  CHECK(zero.points[0].mean == 1.0);

  CHECK_THROWS_AS(
      one_arm_profile(spec, ParamPoint(0.3, 0.3), v, {11}, 10, 1),
      std::invalid_argument);
}

TEST_CASE("crossing_probability: trivial endpoints and periodic rejection") {
  const LatticeSpec spec = LatticeSpec::box(2, 1, 4);
  EstimateRecord hi = crossing_probability(spec, ParamPoint(1.0, 1.0), 0, 50, 3);
  CHECK(hi.mean == 1.0);
  EstimateRecord lo = crossing_probability(spec, ParamPoint(0.0, 0.0), 0, 50, 3);
  CHECK(lo.mean == 0.0);

  const LatticeSpec per = LatticeSpec::slab(2, 1, 6, 2, Bc::Periodic);
  CHECK_THROWS_AS(crossing_probability(per, ParamPoint(0.5, 0.5), 0, 10, 1),
                  std::invalid_argument);
}

TEST_CASE("bisect_critical_q: sanity, brackets, drift, determinism") {
  BisectOptions opt;
  opt.tol = 0.05;
  opt.samples_per_step = 400;
  opt.doubling_cap = 3;
  opt.workers = 2;
  BisectResult res =
      bisect_critical_q(2, 1, ClassRule::AxisDirection, 0.3, 32, opt, 11);
  CHECK(!res.hit_lower);
  CHECK(!res.hit_upper);
  // Half-crossing point of the anisotropic square lattice at p = 0.3 sits
  // near 1 - p; the coarse tolerance only needs the ballpark.
  CHECK(res.q_hat > 0.55);
  CHECK(res.q_hat < 0.85);
  CHECK(res.hi - res.lo <= opt.tol);
  CHECK(res.record.mean == res.q_hat);

  // Brackets shrink monotonically over the midpoint steps.
  double width = 1.0;
  for (size_t i = 2; i < res.steps.size(); ++i) {
    const double w = res.steps[i].hi - res.steps[i].lo;
    CHECK(w <= width);
    width = w;
  }

  // Finite-size drift pass ran at max(8, L/2).
  CHECK(res.L_drift == 16);
  CHECK(std::isfinite(res.drift));

  // Worker count does not change the answer.
  BisectOptions opt1 = opt;
  opt1.workers = 1;
  BisectResult res1 =
      bisect_critical_q(2, 1, ClassRule::AxisDirection, 0.3, 32, opt1, 11);
  CHECK(res1.q_hat == res.q_hat);
  CHECK(res1.steps.size() == res.steps.size());
}

TEST_CASE("bisect_critical_q: non-bracketing boundaries are flagged") {
  BisectOptions opt;
  opt.tol = 0.1;
  opt.samples_per_step = 200;
  opt.doubling_cap = 1;
  opt.with_drift = false;

  // p = 0: isolated lines along the q-axes; crossing along axis 0 never
  // happens, so even q = 1 stays below 1/2.
  BisectResult up =
      bisect_critical_q(2, 1, ClassRule::AxisDirection, 0.0, 16, opt, 19);
  CHECK(up.hit_upper);
  CHECK(up.q_hat == 1.0);

  // p = 1: the axis-0 lines are fully open, so q = 0 already crosses.
  BisectResult down =
      bisect_critical_q(2, 1, ClassRule::AxisDirection, 1.0, 16, opt, 19);
  CHECK(down.hit_lower);
  CHECK(down.q_hat == 0.0);
}

TEST_CASE("slab_critical_curve: N = 0 embeds the plane") {
  BisectOptions opt;
  opt.tol = 0.05;
  opt.samples_per_step = 400;
  opt.doubling_cap = 3;
  opt.workers = 2;
  opt.with_drift = false;
  // d = 3 slab of zero thickness: every vertex lies in H, so only q
  // matters and the embedded square lattice crosses at q near 1/2.
  BisectResult res = slab_critical_curve(3, 2, 0.15, 16, 0, opt, 23);
  CHECK(res.q_hat > 0.35);
  CHECK(res.q_hat < 0.65);
  CHECK(res.record.N == 0);
}

TEST_CASE("subcritical_certificate: exact constant and trivial outcomes") {
  // K' = max_m (|dB_m| / m^d): d = 3, L = 4 -> 26 at m = 1;
  // d = 2, L = 4 -> 8 at m = 1.
  Certificate c3 = subcritical_certificate(3, 2, ClassRule::DefectSublattice,
                                           ParamPoint(0.0, 0.0), 4, 10, 1);
  CHECK(c3.k_prime == doctest::Approx(26.0));
  CHECK(c3.holds);
  REQUIRE(c3.phi.size() == 5);
  for (const auto& r : c3.phi) {
    CHECK(r.mean == 0.0);
    CHECK(r.se == 0.0);
    CHECK(r.L == 4);
  }

  Certificate c2 = subcritical_certificate(2, 1, ClassRule::AxisDirection,
                                           ParamPoint(0.0, 0.0), 4, 10, 1);
  CHECK(c2.k_prime == doctest::Approx(8.0));

  Certificate full = subcritical_certificate(3, 2, ClassRule::DefectSublattice,
                                             ParamPoint(1.0, 1.0), 3, 10, 1);
  CHECK(!full.holds);
  for (const auto& r : full.phi) CHECK(r.mean > 0.5);

  // Deep subcritical point passes at a modest sample count.
  Certificate deep = subcritical_certificate(3, 2, ClassRule::DefectSublattice,
                                             ParamPoint(0.05, 0.05), 4, 2000,
                                             77, 2);
  CHECK(deep.holds);
}

TEST_CASE("gm_seed_event: trivial endpoints, exact counts, kind guard") {
  GMEventSpec ev;
  ev.alpha = 0.5;
  ev.beta = 1.0;
  ev.m = 1;
  ev.n = 8;

  ev.kind = GMEventKind::SeedReach;
  EstimateRecord one = gm_seed_event(3, 2, ClassRule::DefectSublattice,
                                     ParamPoint(1.0, 1.0), ev, 30, 1);
  CHECK(one.mean == 1.0);
  EstimateRecord zero = gm_seed_event(3, 2, ClassRule::DefectSublattice,
                                      ParamPoint(0.0, 0.0), ev, 30, 1);
  CHECK(zero.mean == 0.0);

  // Fully open: |U| = |dv(S)| and |V| = |T| exactly.
  const GMSets sets = GMSets::make(GMGeometry::make(3, 2, 0.5, 1.0, 1, 8));
  ev.kind = GMEventKind::UCount;
  EstimateRecord uc = gm_seed_event(3, 2, ClassRule::DefectSublattice,
                                    ParamPoint(1.0, 1.0), ev, 20, 2);
  CHECK(uc.mean == doctest::Approx(double(sets.du_targets.size())));
  CHECK(uc.se == 0.0);
  ev.kind = GMEventKind::VCount;
  EstimateRecord vc = gm_seed_event(3, 2, ClassRule::DefectSublattice,
                                    ParamPoint(1.0, 1.0), ev, 20, 2);
  CHECK(vc.mean == doctest::Approx(double(sets.t_targets.size())));

  ev.kind = GMEventKind::FiniteSizeConditional;
  CHECK_THROWS_AS(gm_seed_event(3, 2, ClassRule::DefectSublattice,
                                ParamPoint(0.5, 0.5), ev, 10, 1),
                  std::invalid_argument);
}

TEST_CASE("gm_seed_event: seed reach grows with the scale") {
  GMEventSpec ev;
  ev.alpha = 0.25;
  ev.beta = 1.0;
  ev.m = 1;
  ev.kind = GMEventKind::SeedReach;
  const ParamPoint pt(0.15, 0.8);

  ev.n = 8;
  EstimateRecord small = gm_seed_event(3, 2, ClassRule::DefectSublattice, pt,
                                       ev, 1500, 55, 4);
  ev.n = 12;
  EstimateRecord big = gm_seed_event(3, 2, ClassRule::DefectSublattice, pt,
                                     ev, 1500, 55, 4);
  CHECK(big.mean >= small.mean - 4.0 * comb_se(small, big));
}

TEST_CASE("finite_size_conditional: delta = 0 is exactly impossible") {
  GMEventSpec ev;
  ev.alpha = 0.5;
  ev.beta = 1.0;
  ev.m = 1;
  ev.n = 8;
  ev.kind = GMEventKind::FiniteSizeConditional;
  const Region r = Region::ball_mixed({0, 0, 0}, {1, 1, 0});
  auto gamma = [](i64) { return 0.05; };
  EstimateRecord rec =
      finite_size_conditional(3, 2, ClassRule::DefectSublattice,
                              ParamPoint(0.3, 0.7), ev, r, gamma, 0.0, 2000, 8);
  CHECK(rec.mean == 0.0);
}

TEST_CASE("finite_size_conditional: named precondition errors") {
  GMEventSpec ev;
  ev.alpha = 0.5;
  ev.beta = 1.0;
  ev.m = 1;
  ev.n = 8;
  ev.kind = GMEventKind::FiniteSizeConditional;
  auto gamma = [](i64) { return 0.05; };
  const ParamPoint pt(0.3, 0.7);

  // Wrong kind.
  GMEventSpec wrong = ev;
  wrong.kind = GMEventKind::SeedReach;
  CHECK_THROWS_WITH_AS(
      finite_size_conditional(3, 2, ClassRule::DefectSublattice, pt, wrong,
                              Region::ball_mixed({0, 0, 0}, {1, 1, 0}), gamma,
                              0.1, 10, 1),
      "event kind must be finite_size_conditional", std::invalid_argument);

  // R misses the seed core.
  CHECK_THROWS_WITH_AS(
      finite_size_conditional(3, 2, ClassRule::DefectSublattice, pt, ev,
                              Region::ball_mixed({2, 0, 0}, {1, 1, 0}), gamma,
                              0.1, 10, 1),
      "R must contain the sublattice seed core", std::invalid_argument);

  // R grown until its boundary reaches the target shell T.
  CHECK_THROWS_WITH_AS(
      finite_size_conditional(3, 2, ClassRule::DefectSublattice, pt, ev,
                              Region::ball_mixed({0, 0, 0}, {8, 1, 0}), gamma,
                              0.1, 10, 1),
      "R meets the target shell T", std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      finite_size_conditional(3, 2, ClassRule::DefectSublattice, pt, ev,
                              Region::ball_mixed({0, 0, 0}, {7, 1, 0}), gamma,
                              0.1, 10, 1),
      "the vertex boundary of R meets the target shell T",
      std::invalid_argument);

  // Gamma above 1 - delta.
  auto bad_gamma = [](i64) { return 0.95; };
  CHECK_THROWS_WITH_AS(
      finite_size_conditional(3, 2, ClassRule::DefectSublattice, pt, ev,
                              Region::ball_mixed({0, 0, 0}, {1, 1, 0}),
                              bad_gamma, 0.1, 10, 1),
      "gamma(f) must lie in [0, 1-delta]", std::invalid_argument);
}

TEST_CASE("finite_size_conditional: agrees with the rejection oracle") {
  GMEventSpec ev;
  ev.alpha = 0.5;
  ev.beta = 1.0;
  ev.m = 1;
  ev.n = 8;
  ev.kind = GMEventKind::FiniteSizeConditional;
  const Region r = Region::ball_mixed({0, 0, 0}, {1, 1, 0});
  auto gamma = [](i64 slot) { return 0.02 + 0.01 * double(slot % 3); };
  const ParamPoint pt(0.25, 0.75);
  const double delta = 0.1;

  EstimateRecord direct =
      finite_size_conditional(3, 2, ClassRule::DefectSublattice, pt, ev, r,
                              gamma, delta, 6000, 1001, 4);
  CHECK(direct.mean > 0.0);

  // Independent oracle: keep only raw samples with every boundary edge
  // gamma-closed, then evaluate the event on the raw configuration.
  const FiniteSizeContext ctx = FiniteSizeContext::make(
      3, 2, ClassRule::DefectSublattice, pt, ev, r, gamma, delta);
  FiniteSizeContext::Scratch ws;
  i64 accepted = 0, hits = 0;
  for (u64 i = 0; i < 16000; ++i) {
    UniformField f(2002, i);
    if (!ctx.f_all_closed(f)) continue;
    ++accepted;
    if (ctx.event_raw(f, ws)) ++hits;
  }
  REQUIRE(accepted > 1000);
  const double mean_rej = double(hits) / double(accepted);
  const double se_rej = std::sqrt(mean_rej * (1.0 - mean_rej) / accepted);
  const double tol = 4.0 * std::sqrt(direct.se * direct.se + se_rej * se_rej);
  CHECK(std::fabs(direct.mean - mean_rej) <= tol);
}

TEST_CASE("finite_size_conditional: gamma = 0 reduces to the raw law") {
  GMEventSpec ev;
  ev.alpha = 0.5;
  ev.beta = 1.0;
  ev.m = 1;
  ev.n = 8;
  ev.kind = GMEventKind::FiniteSizeConditional;
  const Region r = Region::ball_mixed({0, 0, 0}, {1, 1, 0});
  auto gamma = [](i64) { return 0.0; };
  const ParamPoint pt(0.25, 0.75);
  const double delta = 0.1;

  EstimateRecord direct =
      finite_size_conditional(3, 2, ClassRule::DefectSublattice, pt, ev, r,
                              gamma, delta, 6000, 3003, 4);

  const FiniteSizeContext ctx = FiniteSizeContext::make(
      3, 2, ClassRule::DefectSublattice, pt, ev, r, gamma, delta);
  FiniteSizeContext::Scratch ws;
  i64 hits = 0;
  const i64 n_raw = 6000;
  for (u64 i = 0; i < u64(n_raw); ++i) {
    UniformField f(4004, i);
    CHECK(ctx.f_all_closed(f));  // conditioning is vacuous at gamma = 0
    if (ctx.event_raw(f, ws)) ++hits;
  }
  const double mean_raw = double(hits) / double(n_raw);
  const double se_raw = std::sqrt(mean_raw * (1.0 - mean_raw) / n_raw);
  const double tol = 4.0 * std::sqrt(direct.se * direct.se + se_raw * se_raw);
  CHECK(std::fabs(direct.mean - mean_raw) <= tol);
}

TEST_CASE("finite_size_conditional: worker count does not change the result") {
  GMEventSpec ev;
  ev.alpha = 0.5;
  ev.beta = 1.0;
  ev.m = 1;
  ev.n = 8;
  ev.kind = GMEventKind::FiniteSizeConditional;
  const Region r = Region::ball_mixed({0, 0, 0}, {1, 1, 0});
  auto gamma = [](i64 slot) { return 0.02 + 0.01 * double(slot % 3); };
  EstimateRecord a =
      finite_size_conditional(3, 2, ClassRule::DefectSublattice,
                              ParamPoint(0.25, 0.75), ev, r, gamma, 0.1, 2000,
                              606, 1);
  EstimateRecord b =
      finite_size_conditional(3, 2, ClassRule::DefectSublattice,
                              ParamPoint(0.25, 0.75), ev, r, gamma, 0.1, 2000,
                              606, 4);
  CHECK(a.mean == b.mean);
  CHECK(a.se == b.se);
}

TEST_CASE("trifurcation_mean: trivial configurations have no branch points") {
  const LatticeSpec spec = LatticeSpec::box(2, 1, 2);
  const Region reg = spec.full_region();
  // Fully open grid is biconnected: removing one vertex never splits it.
  EstimateRecord full =
      trifurcation_mean(spec, ParamPoint(1.0, 1.0), reg, 20, 1);
  CHECK(full.mean == 0.0);
  EstimateRecord none =
      trifurcation_mean(spec, ParamPoint(0.0, 0.0), reg, 20, 1);
  CHECK(none.mean == 0.0);

  EstimateRecord a = trifurcation_mean(spec, ParamPoint(0.5, 0.5), reg, 400, 9, 1);
  EstimateRecord b = trifurcation_mean(spec, ParamPoint(0.5, 0.5), reg, 400, 9, 4);
  CHECK(a.mean == b.mean);
  CHECK(a.se == b.se);
}

TEST_CASE("boundary_h_ratio_mean: exact endpoints") {
  const LatticeSpec spec = LatticeSpec::box(3, 2, 4);
  const Region reg = spec.full_region();

  EstimateRecord none =
      boundary_h_ratio_mean(spec, ParamPoint(0.0, 0.0), reg, 20, 1);
  CHECK(none.mean == 0.0);

  // All open: every shell vertex (exactly one coordinate at +-4) joins the
  // sublattice, so the ratio is |shell| / |B_4 cap H| = 294 / 81.
  EstimateRecord full =
      boundary_h_ratio_mean(spec, ParamPoint(1.0, 1.0), reg, 20, 1);
  CHECK(full.mean == doctest::Approx(294.0 / 81.0));
  CHECK(full.se == 0.0);
}

TEST_CASE("boundary_h_ratio_mean: subcritical decay in the box size") {
  const ParamPoint pt(0.3, 0.3);
  const LatticeSpec s3 = LatticeSpec::box(2, 1, 3);
  const LatticeSpec s6 = LatticeSpec::box(2, 1, 6);
  EstimateRecord r3 =
      boundary_h_ratio_mean(s3, pt, s3.full_region(), 3000, 17, 2);
  EstimateRecord r6 =
      boundary_h_ratio_mean(s6, pt, s6.full_region(), 3000, 17, 2);
  CHECK(r6.mean < r3.mean);
}
