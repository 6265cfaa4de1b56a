// Dynamic renormalization: steering maps, block geometry, parameter
// validation, the nine-phase site determination (degenerate all-open /
// all-closed fields plus frozen runs at the desk presets), gamma/zeta
// bracket audits, renormalized cluster growth, and seed separation.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "perclab/gmrenorm.hpp"
#include "perclab/lattice.hpp"

using namespace perclab;

namespace {

std::vector<i64> v3(i64 a, i64 b, i64 c) { return {a, b, c}; }

// Audit every revealed edge: the running bracket gamma <= U < zeta must
// hold, inspections must be positive and peak at the engine's reported
// maximum, and open certificates must stay within the per-inspection
// threshold lift min(1, class + j * delta). Violations are counted rather
// than asserted one by one; the maps hold hundreds of thousands of edges.
void audit_edges(const RenormEngine& eng) {
  const double delta = eng.params().delta;
  i32 peak = 0;
  i64 bad = 0;
  for (const auto& [slot, e] : eng.edges()) {
    const double u = eng.u_of(slot);
    peak = std::max(peak, e.inspections);
    if (e.inspections < 1) ++bad;
    if (!(e.gamma <= u && u < e.zeta)) ++bad;
    if (e.open_known) {
      const double cls = threshold(eng.spec().classify_slot(slot),
                                   eng.params().pt);
      if (!(e.zeta <=
            std::min(1.0, cls + double(e.inspections) * delta) + 1e-12))
        ++bad;
    } else if (e.zeta != 1.0) {
      ++bad;
    }
  }
  CHECK(bad == 0);
  CHECK(peak == eng.max_inspections());
}

i64 sup_dist(const std::vector<i64>& a, const std::vector<i64>& b) {
  i64 best = 0;
  for (size_t i = 0; i < a.size(); ++i)
    best = std::max(best, static_cast<i64>(std::llabs(a[i] - b[i])));
  return best;
}

}  // namespace

// ---------------------------------------------------------------------------
// Steering and rotation

TEST_CASE("steering: fixed axes, flip rules, mode differences") {
  const std::vector<i64> x = v3(1, 3, 0);

  SUBCASE("zero target vector never flips") {
    for (SteerMode m :
         {SteerMode::Phase2, SteerMode::Phase3, SteerMode::Phase5}) {
      const std::vector<i64> y = steering(v3(0, 0, 0), x, m, 2);
      CHECK(y[0] == 1);
      CHECK(y[2] == 0);
      if (m == SteerMode::Phase5)
        CHECK(y[1] == -3);  // unconditional reversal of axis 1
      else
        CHECK(y[1] == 3);
    }
  }
  SUBCASE("axis 1 flips against the sign of the target") {
    CHECK(steering(v3(5, -2, 0), x, SteerMode::Phase2, 2) == v3(1, 3, 0));
    CHECK(steering(v3(5, 2, 0), x, SteerMode::Phase2, 2) == v3(1, -3, 0));
    // Phase 3 holds axis 1 regardless of the target.
    CHECK(steering(v3(5, 2, 0), x, SteerMode::Phase3, 2) == v3(1, 3, 0));
    // Phase 5 reverses it regardless of the target.
    CHECK(steering(v3(5, -2, 0), x, SteerMode::Phase5, 2) == v3(1, -3, 0));
  }
  SUBCASE("s = 3 extends the flip to axis 2") {
    const std::vector<i64> x4{1, 3, 4, 0};
    const std::vector<i64> v4{9, 7, 7, 0};
    CHECK(steering(v4, x4, SteerMode::Phase2, 3) ==
          std::vector<i64>{1, -3, -4, 0});
    CHECK(steering(v4, x4, SteerMode::Phase3, 3) ==
          std::vector<i64>{1, 3, -4, 0});
    CHECK(steering(v4, x4, SteerMode::Phase5, 3) ==
          std::vector<i64>{1, -3, -4, 0});
  }
  SUBCASE("steering is an involution on the flipped axes") {
    const std::vector<i64> v = v3(2, 8, 0);
    const std::vector<i64> once = steering(v, x, SteerMode::Phase2, 2);
    CHECK(steering(v, once, SteerMode::Phase2, 2)[1] == -once[1]);
  }
  SUBCASE("dimension mismatches are rejected") {
    CHECK_THROWS_AS(steering(v3(0, 0, 0), {1, 2}, SteerMode::Phase2, 2),
                    std::invalid_argument);
    CHECK_THROWS_AS(steering(v3(0, 0, 0), x, SteerMode::Phase2, 4),
                    std::invalid_argument);
  }
}

TEST_CASE("rotate_quarter: quarter turn of the leading plane") {
  CHECK(rotate_quarter(v3(1, 0, 0)) == v3(0, -1, 0));
  CHECK(rotate_quarter(v3(0, 1, 0)) == v3(1, 0, 0));
  CHECK(rotate_quarter(v3(1, 2, 5)) == v3(2, -1, 5));
  std::vector<i64> x = v3(7, -4, 9);
  std::vector<i64> y = x;
  for (int i = 0; i < 4; ++i) y = rotate_quarter(y);
  CHECK(y == x);
  CHECK_THROWS_AS(rotate_quarter({1}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Parameters

TEST_CASE("RenormParams: presets validate, window arithmetic") {
  RenormParams desk = RenormParams::desk();
  desk.validate();
  CHECK(desk.N() == 96);
  CHECK(desk.beta3_eff() ==
        doctest::Approx(2.0 + desk.alpha + desk.alpha * desk.alpha));
  CHECK(desk.lambda_target() == doctest::Approx(0.85275));
  CHECK(desk.epsilon_target() == doctest::Approx((1.0 - 0.7055) / 150.0));

  RenormParams small = RenormParams::desk_small();
  small.validate();
  CHECK(small.N() == 72);

  // Tight constants at a scale large enough for the window inequalities.
  RenormParams tight = RenormParams::paper_geometry(400, 0.8);
  tight.validate();
  CHECK(tight.alpha == doctest::Approx(0.01));
  CHECK(tight.delta == doctest::Approx(0.05));
  CHECK(tight.assert_inspection_cap);
  CHECK_THROWS_AS(RenormParams::paper_geometry(400, 0.0),
                  std::invalid_argument);
}

TEST_CASE("RenormParams: named rejections") {
  SUBCASE("basic ranges") {
    RenormParams r = RenormParams::desk();
    r.d = 2;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = RenormParams::desk();
    r.s = 3;  // s = d
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = RenormParams::desk();
    r.beta3 = 1.5;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = RenormParams::desk();
    r.delta = 0.0;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
    r = RenormParams::desk();
    r.budgets[4] = 0;
    CHECK_THROWS_AS(r.validate(), std::invalid_argument);
  }
  SUBCASE("window depth: floor(alpha n) must hold a seed patch") {
    RenormParams r = RenormParams::desk();
    r.alpha = 0.1;  // floor(1.6) = 1 < 2m + 1
    CHECK_THROWS_WITH_AS(r.validate(),
                         "step windows must be deep enough to hold a seed "
                         "patch",
                         std::invalid_argument);
  }
  SUBCASE("jump cap: n - floor(alpha n) - 2 must admit a seed") {
    RenormParams r = RenormParams::desk();
    r.n = 8;
    r.alpha = 0.75;  // cap = 8 - 6 - 2 = 0 < m
    CHECK_THROWS_WITH_AS(r.validate(),
                         "transverse jump cap must admit a seed",
                         std::invalid_argument);
  }
  SUBCASE("branch band: fractional parts can eat its depth") {
    RenormParams r = RenormParams::desk();
    r.alpha = 0.2;       // floor(alpha n) = 3, the legal minimum
    r.beta3 = 2.0007;    // band [34, 35] is too shallow for m = 1
    CHECK_THROWS_WITH_AS(r.validate(),
                         "branch band must be deep enough to hold a seed "
                         "patch",
                         std::invalid_argument);
  }
  SUBCASE("up-branch ball must stay clear of the down-leg windows") {
    RenormParams r = RenormParams::desk();
    r.beta3 = 2.9;  // floor((beta3 + alpha) n) = 51 > 3n + m - 1 = 48
    CHECK_THROWS_WITH_AS(r.validate(),
                         "up-branch ball must clear the down-leg windows",
                         std::invalid_argument);
  }
}

// ---------------------------------------------------------------------------
// Block geometry

TEST_CASE("BlockGeometry: centers, site blocks, passage blocks") {
  const BlockGeometry g(3, 12);  // N = 72
  const i64 N = 72;
  CHECK(g.N == N);
  CHECK(g.lower_center(0, 0) == v3(0, 0, 0));
  CHECK(g.lower_center(1, -1) == v3(4 * N, -4 * N, 0));
  CHECK(g.upper_center(1, -1) == v3(4 * N, -4 * N + 2 * N, 0));

  const Region lam = g.lambda(0, 0);
  CHECK(lam.lo == v3(-N, -N, -N));
  CHECK(lam.hi == v3(N, 3 * N, N));
  CHECK(lam.contains(g.lower_center(0, 0)));
  CHECK(lam.contains(g.upper_center(0, 0)));
  CHECK(g.lambda_lower(0, 0).contains(v3(N, N, N)));
  CHECK(!g.lambda_lower(0, 0).contains(v3(N, N + 1, N)));
  CHECK(g.lambda_upper(0, 0).contains(v3(0, 3 * N, 0)));

  // The passage block sits one renormalized step ahead, spanning both
  // diagonal translates.
  const Region pi = g.pi(0, 0);
  CHECK(pi.lo == v3(N, -3 * N, -N));
  CHECK(pi.hi == v3(3 * N, 5 * N, N));
  CHECK(pi.contains(v3(2 * N, -2 * N, 0)));  // down-diagonal translate
  CHECK(pi.contains(v3(2 * N, 2 * N, 0)));   // up-diagonal translate
  CHECK(!pi.contains(v3(0, 0, 0)));
}

// ---------------------------------------------------------------------------
// Degenerate fields

TEST_CASE("determine_site: an all-open field completes every phase") {
  RenormParams prm = RenormParams::desk_small();
  prm.pt = ParamPoint(1.0, 1.0);
  prm.delta = 1.0;
  RenormEngine eng(prm, 1, 0, 1);
  const SiteResult r = eng.determine_site(0, 0);
  CHECK(r.z == 1);
  CHECK(r.phases_completed == 9);
  CHECK(!r.used_upper_seed);
  CHECK(!r.gm4_violation);
  CHECK(r.steps_used == 53);
  CHECK(r.steps_used <= 75);
  // Every probe succeeds at its first inspection.
  CHECK(eng.max_inspections() == 1);
  CHECK(eng.certified_above_8delta() == 0);
  // The branch exits land in the half-blocks the forward sites read.
  REQUIRE(!r.s_exit.empty());
  REQUIRE(!r.S_exit.empty());
  CHECK(eng.blocks().lambda_upper(1, -1).contains(r.s_exit));
  CHECK(eng.blocks().lambda_lower(1, 1).contains(r.S_exit));
  CHECK(r.s_exit[2] == 0);
  CHECK(r.S_exit[2] == 0);
  CHECK(eng.site_state(0, 0) == 1);
  CHECK(eng.s_exit_of(0, 0) == r.s_exit);
  CHECK(eng.S_exit_of(0, 0) == r.S_exit);
}

TEST_CASE("determine_site: an all-closed field dies at the origin patch") {
  RenormParams prm = RenormParams::desk_small();
  prm.pt = ParamPoint(0.0, 0.0);
  prm.force_origin_seed = false;
  RenormEngine eng(prm, 1, 0, 1);
  const SiteResult r = eng.determine_site(0, 0);
  CHECK(r.z == 0);
  CHECK(r.phases_completed == 0);
  CHECK(r.steps_used == 0);
  CHECK(!r.gm4_violation);
  // The entry-seed check inspects exactly the origin patch: a (2m+1)^2
  // plaquette of the defect plane has 2 m (2m+1) edges per in-plane axis.
  CHECK(r.edges_touched == 12);
  CHECK(r.s_exit.empty());
  CHECK(eng.site_state(0, 0) == 0);
  CHECK(eng.s_exit_of(0, 0) == std::nullopt);
  // The failed entry check leaves exactly one trace record.
  REQUIRE(eng.trace().size() == 1);
  CHECK(eng.trace()[0].phase == 1);
  CHECK(!eng.trace()[0].success);
  CHECK(eng.trace()[0].seed_center.empty());
  audit_edges(eng);
}

// ---------------------------------------------------------------------------
// Frozen runs at the presets

TEST_CASE("determine_site: frozen chain of three sites at desk_small") {
  RenormParams prm = RenormParams::desk_small();
  RenormEngine eng(prm, 9001, 0, 2);

  const SiteResult o = eng.determine_site(0, 0);
  CHECK(o.z == 1);
  CHECK(o.phases_completed == 9);
  CHECK(o.steps_used == 52);
  CHECK(o.edges_touched == 312441);
  CHECK(!o.used_upper_seed);
  CHECK(o.s_exit == v3(297, -136, 0));
  CHECK(o.S_exit == v3(290, 277, 0));
  CHECK(eng.blocks().lambda_upper(1, -1).contains(o.s_exit));
  CHECK(eng.blocks().lambda_lower(1, 1).contains(o.S_exit));

  // Forward sites chain off the recorded exits; the down-forward site runs
  // in the mirrored frame.
  const SiteResult dn = eng.determine_site(1, -1);
  CHECK(dn.z == 1);
  CHECK(dn.used_upper_seed);
  CHECK(dn.steps_used == 53);
  const SiteResult up = eng.determine_site(1, 1);
  CHECK(up.z == 1);
  CHECK(!up.used_upper_seed);
  CHECK(up.steps_used == 52);
  CHECK(eng.blocks().lambda_upper(2, -2).contains(*eng.s_exit_of(1, -1)));
  CHECK(eng.blocks().lambda_lower(2, 2).contains(*eng.S_exit_of(1, 1)));

  CHECK(eng.max_inspections() == 5);
  CHECK(eng.max_inspections() <= 8);
  CHECK(eng.certified_above_8delta() == 0);
  audit_edges(eng);

  // One trace record per consumed step (the three entry checks included),
  // strictly ordered: 3 + 52 + 53 + 52.
  CHECK(eng.trace().size() == 160);
  CHECK(eng.steps_total() == 160);
  int entry_checks = 0;
  for (size_t i = 0; i < eng.trace().size(); ++i) {
    const StepTrace& t = eng.trace()[i];
    CHECK(t.k == static_cast<i64>(i) + 1);
    CHECK(t.phase >= 1);
    CHECK(t.phase <= 9);
    CHECK(t.box_radius > 0);
    CHECK(t.seed_center.empty() == !t.success);
    if (t.phase == 1) ++entry_checks;
  }
  CHECK(entry_checks == 3);

  // Memoization and entry wiring.
  CHECK(eng.site_state(2, 0) == std::nullopt);
  CHECK_THROWS_AS(eng.begin_site(0, 0), std::invalid_argument);   // repeat
  CHECK_THROWS_AS(eng.begin_site(1, 0), std::invalid_argument);   // odd parity
  CHECK_THROWS_AS(eng.begin_site(-1, 1), std::invalid_argument);  // x1 < 0
  CHECK_THROWS_AS(eng.begin_site(3, 1), std::invalid_argument);   // no entry
}

TEST_CASE("determine_site: frozen origin run at desk") {
  RenormParams prm = RenormParams::desk();
  RenormEngine eng(prm, 9001, 0, 1);
  const SiteResult r = eng.determine_site(0, 0);
  CHECK(r.z == 1);
  CHECK(r.phases_completed == 9);
  CHECK(r.steps_used == 55);
  CHECK(r.edges_touched == 557404);
  CHECK(r.s_exit == v3(384, -177, 0));
  CHECK(r.S_exit == v3(396, 364, 0));
  CHECK(eng.max_inspections() == 5);
  CHECK(eng.certified_above_8delta() == 0);
  audit_edges(eng);
}

TEST_CASE("RenormEngine: constructor guards") {
  RenormParams prm = RenormParams::desk_small();
  CHECK_THROWS_AS(RenormEngine(prm, 1, 0, -1), std::invalid_argument);
  prm.n = 50000;  // slot numbering would overflow the ambient box
  CHECK_THROWS_WITH_AS(RenormEngine(prm, 1, 0, 1),
                       "ambient box too large for the slot numbering",
                       std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Trace rendering

TEST_CASE("trace_to_jsonl: one object per record, null seed on failure") {
  StepTrace a;
  a.phase = 2;
  a.k = 1;
  a.box_center = v3(4, -3, 0);
  a.box_radius = 16;
  a.success = true;
  a.seed_center = v3(9, -3, 0);
  a.edges_touched = 120;
  StepTrace b;
  b.phase = 7;
  b.k = 2;
  b.box_center = v3(0, 0, 0);
  b.box_radius = 21;
  b.success = false;
  b.edges_touched = 4;
  const std::string out = trace_to_jsonl({a, b});

  std::istringstream in(out);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] ==
        "{\"phase\":2,\"k\":1,\"box_center\":[4,-3,0],\"box_radius\":16,"
        "\"success\":true,\"seed_center\":[9,-3,0],\"edges_touched\":120}");
  CHECK(lines[1] ==
        "{\"phase\":7,\"k\":2,\"box_center\":[0,0,0],\"box_radius\":21,"
        "\"success\":false,\"seed_center\":null,\"edges_touched\":4}");
  CHECK(trace_to_jsonl({}).empty());
}

// ---------------------------------------------------------------------------
// Cluster growth

TEST_CASE("grow_renormalized_cluster: all-open growth, all-closed death") {
  SUBCASE("everything open: the cluster adds every candidate") {
    RenormParams prm = RenormParams::desk_small();
    prm.n = 10;
    prm.alpha = 0.4;
    prm.pt = ParamPoint(1.0, 1.0);
    prm.delta = 1.0;
    const Trajectory t = grow_renormalized_cluster(prm, 5, 0, 3);
    CHECK(t.determinations == 3);
    CHECK(t.successes == 3);
    CHECK(t.reached_max);
    CHECK(t.B.empty());
    REQUIRE(t.A.size() == 3);
    // Candidate order: the origin, then its down edge before its up edge.
    CHECK(t.A[0] == std::pair<i64, i64>(0, 0));
    CHECK(t.A[1] == std::pair<i64, i64>(1, -1));
    CHECK(t.A[2] == std::pair<i64, i64>(1, 1));
    CHECK(t.rho_hat() == doctest::Approx(1.0));
    for (const TrajectoryStep& st : t.steps) CHECK(st.z == 1);
  }
  SUBCASE("everything closed: immediate extinction") {
    RenormParams prm = RenormParams::desk_small();
    prm.pt = ParamPoint(0.0, 0.0);
    prm.force_origin_seed = false;
    const Trajectory t = grow_renormalized_cluster(prm, 5, 0, 8);
    CHECK(t.determinations == 1);
    CHECK(t.successes == 0);
    CHECK(!t.reached_max);
    CHECK(t.A.empty());
    CHECK(t.B.size() == 1);
    CHECK(t.rho_hat() == doctest::Approx(0.0));
  }
  SUBCASE("max_sites must be positive") {
    CHECK_THROWS_AS(
        grow_renormalized_cluster(RenormParams::desk_small(), 5, 0, 0),
        std::invalid_argument);
  }
}

TEST_CASE("grow_renormalized_cluster: frozen run at desk_small") {
  std::unique_ptr<RenormEngine> eng;
  const Trajectory t =
      grow_renormalized_cluster(RenormParams::desk_small(), 7700, 0, 12, &eng);
  CHECK(t.determinations == 12);
  CHECK(t.successes == 11);
  CHECK(t.A.size() == 11);
  CHECK(t.B.size() == 1);
  CHECK(t.reached_max);
  CHECK(t.rho_hat() == doctest::Approx(11.0 / 12.0));
  REQUIRE(t.steps.size() == 12);
  CHECK(t.steps.front().t == 1);
  CHECK(t.steps.back().t == 12);
  CHECK(t.steps.back().rho_hat == doctest::Approx(11.0 / 12.0));
  for (const auto& [x1, x2] : t.A) {
    CHECK(x1 >= 0);
    CHECK((x1 + x2) % 2 == 0);
  }
  REQUIRE(eng != nullptr);
  CHECK(eng->site_state(0, 0) == 1);
  CHECK(eng->max_inspections() <= 8);
  CHECK(eng->certified_above_8delta() == 0);
  audit_edges(*eng);
}

// ---------------------------------------------------------------------------
// Separation

TEST_CASE("separation_threshold: worst-case elimination count") {
  CHECK(separation_threshold(1, 5, 2) == 0);
  CHECK(separation_threshold(2, 1, 2) == 9);     // (2*1+1)^2
  CHECK(separation_threshold(3, 2, 2) == 50);    // 2 * 5^2
  CHECK(separation_threshold(4, 1, 3) == 81);    // 3 * 3^3
  CHECK(separation_threshold(2, 0, 2) == 1);
  CHECK_THROWS_AS(separation_threshold(0, 1, 2), std::invalid_argument);
  CHECK_THROWS_AS(separation_threshold(2, -1, 2), std::invalid_argument);
}

TEST_CASE("separation_check: strict distance, greedy guarantee") {
  SUBCASE("a single target needs a single point") {
    const SeparationResult r = separation_check({{0, 0}}, 1, 100);
    CHECK(r.success);
    CHECK(r.chosen.size() == 1);
  }
  SUBCASE("distance exactly k does not separate") {
    const SeparationResult r = separation_check({{0, 0}, {3, 0}}, 2, 3);
    CHECK(!r.success);
    CHECK(separation_check({{0, 0}, {4, 0}}, 2, 3).success);
  }
  SUBCASE("more points than the threshold always suffice") {
    // 101 distinct plane points beat separation_threshold(3, 2, 2) = 50;
    // the greedy pick must then find 3 points pairwise more than 2 apart.
    std::mt19937 rng(20260822);
    std::uniform_int_distribution<i64> coord(-40, 40);
    std::vector<std::vector<i64>> pts;
    while (pts.size() < 101) {
      std::vector<i64> c{coord(rng), coord(rng)};
      if (std::find(pts.begin(), pts.end(), c) == pts.end()) pts.push_back(c);
    }
    const SeparationResult r = separation_check(pts, 3, 2);
    REQUIRE(r.success);
    REQUIRE(r.chosen.size() == 3);
    for (size_t i = 0; i < r.chosen.size(); ++i)
      for (size_t j = i + 1; j < r.chosen.size(); ++j)
        CHECK(sup_dist(r.chosen[i], r.chosen[j]) > 2);
  }
  SUBCASE("an empty pool can only fail") {
    CHECK(!separation_check({}, 1, 1).success);
  }
}
