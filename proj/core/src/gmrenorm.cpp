#include "perclab/gmrenorm.hpp"

#include <algorithm>
#include <set>
#include <utility>

namespace perclab {

// ---------------------------------------------------------------------------
// Parameters

void RenormParams::validate() const {
  PERCLAB_REQUIRE(d >= 3, "renormalization needs d >= 3");
  PERCLAB_REQUIRE(s >= 2 && s < d, "renormalization needs 2 <= s < d");
  PERCLAB_REQUIRE(m >= 1, "seed half-width m must be >= 1");
  PERCLAB_REQUIRE(n > 3 * m, "block scale n must exceed 3m");
  PERCLAB_REQUIRE(alpha > 0.0 && alpha <= 1.5, "alpha must lie in (0, 1.5]");
  PERCLAB_REQUIRE(beta3 == 0.0 || beta3 >= 2.0,
                  "explicit beta3 must be >= 2");
  PERCLAB_REQUIRE(delta > 0.0 && delta <= 1.0, "delta must lie in (0, 1]");
  PERCLAB_REQUIRE(i64(std::floor(alpha * double(n))) >= 2 * m + 1,
                  "step windows must be deep enough to hold a seed patch");
  PERCLAB_REQUIRE(n - i64(std::floor(alpha * double(n))) - 2 >= m,
                  "transverse jump cap must admit a seed");
  const double b3 = beta3_eff();
  PERCLAB_REQUIRE(i64(std::ceil(b3 * double(n) + 1.0)) -
                          i64(std::floor((b3 + alpha) * double(n))) + 2 * m <=
                      0,
                  "branch band must be deep enough to hold a seed patch");
  PERCLAB_REQUIRE(i64(std::ceil(b3 * double(n) + 1.0)) -
                          i64(std::floor((1.0 + alpha) * double(n))) - 2 >= m,
                  "corridor tube must clear the branch bands");
  PERCLAB_REQUIRE(i64(std::floor((b3 + alpha) * double(n))) <= 3 * n + m - 1,
                  "up-branch ball must clear the down-leg windows");
  pt.validate();
  PERCLAB_REQUIRE(pc_site > 0.0 && pc_site < 1.0,
                  "site threshold must lie in (0, 1)");
  for (int b : budgets) PERCLAB_REQUIRE(b >= 1, "phase budgets must be >= 1");
}

RenormParams RenormParams::desk() {
  RenormParams r;
  r.d = 3;
  r.s = 2;
  r.m = 1;
  r.n = 16;
  r.alpha = 0.3125;  // alpha*n = 5 exactly
  r.delta = 0.20;
  r.pt = ParamPoint(0.10, 0.95);
  return r;
}

RenormParams RenormParams::desk_small() {
  RenormParams r = desk();
  r.n = 12;
  r.alpha = 1.0 / 3.0;  // smallest scale whose windows hold seed patches
  return r;
}

RenormParams RenormParams::paper_geometry(i64 n, double eta) {
  PERCLAB_REQUIRE(eta > 0.0 && eta <= 1.0, "eta must lie in (0, 1]");
  RenormParams r;
  r.d = 3;
  r.s = 2;
  r.m = 1;
  r.n = n;
  r.alpha = 0.01;
  r.delta = eta / 16.0;
  r.pt = ParamPoint(0.10, 0.95);
  r.assert_inspection_cap = true;
  return r;
}

// ---------------------------------------------------------------------------
// Block geometry

std::vector<i64> BlockGeometry::lower_center(i64 x1, i64 x2) const {
  std::vector<i64> c(d, 0);
  c[0] = 4 * N * x1;
  c[1] = 4 * N * x2;
  return c;
}

std::vector<i64> BlockGeometry::upper_center(i64 x1, i64 x2) const {
  std::vector<i64> c = lower_center(x1, x2);
  c[1] += 2 * N;
  return c;
}

Region BlockGeometry::lambda_lower(i64 x1, i64 x2) const {
  return Region::ball(lower_center(x1, x2), N);
}

Region BlockGeometry::lambda_upper(i64 x1, i64 x2) const {
  return Region::ball(upper_center(x1, x2), N);
}

Region BlockGeometry::lambda(i64 x1, i64 x2) const {
  // The two stacked N-boxes share a face, so the union is again a box.
  Region g = lambda_lower(x1, x2);
  g.hi[1] += 2 * N;
  return g;
}

Region BlockGeometry::pi(i64 x1, i64 x2) const {
  // Lambda translated by 2N(e1 + e2) and by 2N(e1 - e2); the translates
  // overlap in the middle, so the union is one box ahead of Lambda.
  Region g = lambda(x1, x2);
  g.lo[0] += 2 * N;
  g.hi[0] += 2 * N;
  g.lo[1] -= 2 * N;
  g.hi[1] += 2 * N;
  return g;
}

// ---------------------------------------------------------------------------
// Steering

std::vector<i64> steering(const std::vector<i64>& v, const std::vector<i64>& x,
                          SteerMode mode, int s) {
  PERCLAB_REQUIRE(v.size() == x.size(), "steering needs equal dimensions");
  PERCLAB_REQUIRE(s >= 1 && static_cast<size_t>(s) <= x.size(),
                  "steering sublattice dimension out of range");
  std::vector<i64> out = x;
  const int first = (mode == SteerMode::Phase2) ? 1 : 2;
  for (int i = first; i < s; ++i) out[i] = steer_flip(v[i]) * x[i];
  if (mode == SteerMode::Phase5 && s >= 2) out[1] = -x[1];
  return out;
}

std::vector<i64> rotate_quarter(const std::vector<i64>& x) {
  PERCLAB_REQUIRE(x.size() >= 2, "rotation needs at least two coordinates");
  std::vector<i64> out = x;
  out[0] = x[1];
  out[1] = -x[0];
  return out;
}

// ---------------------------------------------------------------------------
// Trace

namespace {

void append_coords(std::string& out, const std::vector<i64>& c) {
  out += '[';
  for (size_t i = 0; i < c.size(); ++i) {
    if (i) out += ',';
    out += fmt_int(c[i]);
  }
  out += ']';
}

}  // namespace

std::string trace_to_jsonl(const std::vector<StepTrace>& trace) {
  std::string out;
  for (const StepTrace& t : trace) {
    out += "{\"phase\":";
    out += fmt_int(t.phase);
    out += ",\"k\":";
    out += fmt_int(t.k);
    out += ",\"box_center\":";
    append_coords(out, t.box_center);
    out += ",\"box_radius\":";
    out += fmt_int(t.box_radius);
    out += ",\"success\":";
    out += t.success ? "true" : "false";
    out += ",\"seed_center\":";
    if (t.seed_center.empty()) {
      out += "null";
    } else {
      append_coords(out, t.seed_center);
    }
    out += ",\"edges_touched\":";
    out += fmt_int(t.edges_touched);
    out += "}\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Frame

std::vector<i64> RenormEngine::Frame::to_global(
    const std::vector<i64>& local) const {
  std::vector<i64> g = origin;
  for (size_t i = 0; i < g.size(); ++i)
    g[i] += (mirror && i == 1) ? -local[i] : local[i];
  return g;
}

std::vector<i64> RenormEngine::Frame::to_local(
    const std::vector<i64>& global) const {
  std::vector<i64> l(origin.size());
  for (size_t i = 0; i < l.size(); ++i)
    l[i] = (mirror && i == 1) ? origin[i] - global[i] : global[i] - origin[i];
  return l;
}

Region RenormEngine::Frame::to_global_region(const Region& local) const {
  Region g;
  g.lo.resize(origin.size());
  g.hi.resize(origin.size());
  for (size_t i = 0; i < origin.size(); ++i) {
    if (mirror && i == 1) {
      g.lo[i] = origin[i] - local.hi[i];
      g.hi[i] = origin[i] - local.lo[i];
    } else {
      g.lo[i] = origin[i] + local.lo[i];
      g.hi[i] = origin[i] + local.hi[i];
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Engine

RenormEngine::RenormEngine(const RenormParams& prm, u64 master_seed,
                           u64 sample_index, i64 max_x1)
    : prm_(prm), blocks_(prm), field_(master_seed, sample_index) {
  prm_.validate();
  PERCLAB_REQUIRE(max_x1 >= 0, "max_x1 must be >= 0");
  const i64 N = prm_.N();
  const i64 reach = 4 * N * (max_x1 + 1) + 2 * N;
  std::vector<AxisSpec> axes;
  axes.push_back(AxisSpec{-2 * N, reach, Bc::Free});
  axes.push_back(AxisSpec{-reach, reach, Bc::Free});
  for (int a = 2; a < prm_.s; ++a)
    axes.push_back(AxisSpec{-2 * N, 2 * N, Bc::Free});
  for (int a = prm_.s; a < prm_.d; ++a)
    axes.push_back(AxisSpec{-N, N, Bc::Free});
  long double cells = 1.0L;
  for (const AxisSpec& ax : axes) cells *= static_cast<long double>(ax.extent());
  PERCLAB_REQUIRE(cells * prm_.d < 9.0e17L,
                  "ambient box too large for the slot numbering");
  spec_ = std::make_unique<LatticeSpec>(prm_.d, prm_.s, std::move(axes),
                                        ClassRule::DefectSublattice);

  if (prm_.force_origin_seed) {
    // Conditional law of the origin patch given that it forms a seed:
    // every patch edge rescaled into [0, q).
    Region patch = sublattice_box(*spec_, blocks_.lower_center(0, 0), prm_.m);
    for_each_vertex(*spec_, patch, [&](i64 v, const std::vector<i64>& c) {
      for (int a = 0; a < prm_.s; ++a) {
        if (c[a] + 1 > patch.hi[a]) continue;
        forced_open_[spec_->edge_slot(v, a)] =
            threshold(spec_->classify_edge(v, a), prm_.pt);
      }
    });
  }
}

double RenormEngine::u_of(i64 slot) const {
  double raw = field_.u(slot);
  auto it = forced_open_.find(slot);
  return it == forced_open_.end() ? raw : raw * it->second;
}

double RenormEngine::class_threshold(i64 v, int a) const {
  return threshold(spec_->classify_edge(v, a), prm_.pt);
}

bool RenormEngine::probe(i64 v, int a, bool boundary, int phase) {
  const i64 slot = spec_->edge_slot(v, a);
  EdgeInfo& e = edges_[slot];
  PERCLAB_CHECK(e.probe_step != k_, "edge probed twice within one step");
  const double u = u_of(slot);
  PERCLAB_CHECK(e.gamma <= u && u < e.zeta,
                "gamma/zeta bracket broken before probe");
  double level;
  if (boundary) {
    level = e.gamma + prm_.delta;
    if (level > 1.0) {
      level = 1.0;
      ++gamma_cap_hits_;
    }
  } else {
    PERCLAB_CHECK(e.inspections == 0 && !e.open_known,
                  "class-level probe on a previously inspected edge");
    level = class_threshold(v, a);
  }
  ++e.inspections;
  if (e.inspections > max_inspections_) max_inspections_ = e.inspections;
  if (prm_.assert_inspection_cap) {
    if (e.inspections > 8)
      throw RenormError("edge inspected more than 8 times", phase, k_);
  }
  e.probe_step = k_;
  if (e.det_tag != det_counter_) {
    e.det_tag = det_counter_;
    det_touched_.push_back(slot);
  }
  if (u < level) {
    e.open_known = true;
    e.open_step = k_;
    e.zeta = level;
    PERCLAB_CHECK(e.gamma <= u && u < e.zeta,
                  "gamma/zeta bracket broken by absorption");
    return true;
  }
  PERCLAB_CHECK(level >= e.gamma, "gamma update must be monotone");
  e.gamma = level;
  PERCLAB_CHECK(e.gamma <= u && u < e.zeta,
                "gamma/zeta bracket broken by closed probe");
  return false;
}

RenormEngine::StepResult RenormEngine::run_step(int phase,
                                                const std::vector<i64>& base_local,
                                                i64 radius,
                                                const Region& f_local,
                                                const Region& accept_local,
                                                const std::vector<int>& scan_dir) {
  ++k_;
  const i64 step = k_;
  const std::vector<i64> base_g = frame_.to_global(base_local);
  const Region D = Region::ball(base_g, radius);
  PERCLAB_CHECK(D.subset_of(spec_->full_region()),
                "exploration box left the ambient lattice");
  const Region f_g = frame_.to_global_region(f_local);
  PERCLAB_CHECK(f_g.subset_of(D), "target window must lie inside its box");

  std::vector<i64> tbuf(prm_.d);
  auto in_T = [&](const std::vector<i64>& c) {
    if (!D.contains(c) || f_g.contains(c)) return false;
    for (int a = 0; a < prm_.d; ++a) {
      for (int dr : {-1, +1}) {
        tbuf = c;
        tbuf[a] += dr;
        if (f_g.contains(tbuf)) return true;
      }
    }
    return false;
  };

  // Precondition: the explored region, with its vertex boundary, must stay
  // clear of the window's shell before the step reveals anything new.
  {
    Region hull = f_g;
    for (int a = 0; a < prm_.d; ++a) {
      hull.lo[a] -= 1;
      hull.hi[a] += 1;
    }
    hull = hull.intersect(D);
    bool bad = false;
    for_each_vertex(*spec_, hull, [&](i64 v, const std::vector<i64>& c) {
      if (bad || !in_T(c)) return;
      if (r_step_.count(v)) {
        bad = true;
        return;
      }
      for (int a = 0; a < prm_.d && !bad; ++a) {
        for (int dr : {+1, -1}) {
          i64 w = spec_->neighbor(v, a, dr);
          if (w >= 0 && r_step_.count(w)) {
            bad = true;
            break;
          }
        }
      }
    });
    if (bad)
      throw RenormError("explored region touches the target shell", phase,
                        step);
  }

  i64 touched = 0;
  std::vector<std::pair<i64, std::vector<i64>>> queue;
  std::vector<i64> wc(prm_.d);
  // Membership of the explored region, frozen at step start.
  auto in_R = [&](i64 v) {
    auto it = r_step_.find(v);
    return it != r_step_.end() && it->second < step;
  };

  // Stage 1: every boundary edge of the explored region inside D gets its
  // one sprinkle chance at gamma + delta; open ones admit their far
  // endpoint as an entry point of the fresh cluster.
  for_each_vertex(*spec_, D, [&](i64 v, const std::vector<i64>& c) {
    if (!in_R(v)) return;
    for (int a = 0; a < prm_.d; ++a) {
      for (int dr : {+1, -1}) {
        const i64 w = spec_->neighbor(v, a, dr);
        if (w < 0 || in_R(w)) continue;
        wc = c;
        wc[a] += dr;
        if (!D.contains(wc)) continue;
        const i64 tail = dr > 0 ? v : w;
        auto eit = edges_.find(spec_->edge_slot(tail, a));
        if (eit != edges_.end()) {
          const EdgeInfo& e = eit->second;
          if (e.open_known && e.open_step < step) continue;
          if (e.probe_step == step) continue;
        }
        ++touched;
        if (probe(tail, a, /*boundary=*/true, phase)) {
          if (r_step_.try_emplace(w, step).second) queue.emplace_back(w, wc);
        }
      }
    }
  });

  // Stage 2: from the admitted endpoints, reveal the cluster of fresh
  // edges at class thresholds. A path may re-enter the explored region
  // only through a sprinkle edge, so expansion skips edges with an
  // endpoint there; every edge probed here is fresh, because earlier
  // probes always had an endpoint in the region as it then stood.
  for (size_t qi = 0; qi < queue.size(); ++qi) {
    const i64 x = queue[qi].first;
    const std::vector<i64> xc = queue[qi].second;
    for (int a = 0; a < prm_.d; ++a) {
      for (int dr : {+1, -1}) {
        const i64 w = spec_->neighbor(x, a, dr);
        if (w < 0 || in_R(w)) continue;
        wc = xc;
        wc[a] += dr;
        if (!D.contains(wc)) continue;
        const i64 tail = dr > 0 ? x : w;
        auto eit = edges_.find(spec_->edge_slot(tail, a));
        if (eit != edges_.end()) {
          const EdgeInfo& e = eit->second;
          if (e.probe_step == step) continue;
          PERCLAB_CHECK(!e.open_known && e.inspections == 0,
                        "stale certificate on an untouched edge");
        }
        ++touched;
        if (probe(tail, a, /*boundary=*/false, phase)) {
          if (r_step_.try_emplace(w, step).second) queue.emplace_back(w, wc);
        }
      }
    }
  }

  // Seed scan: the earliest center (local lexicographic order) whose patch
  // lies in the window, is certified open at q, and is linked to the
  // revealed cluster by an open edge crossing the shell.
  Region scan = accept_local;
  for (int a = 0; a < prm_.s; ++a) {
    scan.lo[a] = std::max(scan.lo[a], f_local.lo[a] + prm_.m);
    scan.hi[a] = std::min(scan.hi[a], f_local.hi[a] - prm_.m);
  }
  for (int a = prm_.s; a < prm_.d; ++a) {
    PERCLAB_CHECK(f_local.lo[a] <= 0 && f_local.hi[a] >= 0,
                  "window must meet the defect hyperplane");
    scan.lo[a] = 0;
    scan.hi[a] = 0;
  }

  auto seed_ok = [&](const std::vector<i64>& z_local,
                     std::vector<i64>& z_global) {
    z_global = frame_.to_global(z_local);
    // Patch certified q-open.
    const Region patch = sublattice_box(*spec_, z_global, prm_.m);
    bool open = true;
    std::vector<i64> pc(prm_.d);
    for_each_vertex(*spec_, patch, [&](i64 v, const std::vector<i64>& c) {
      if (!open) return;
      for (int a = 0; a < prm_.s; ++a) {
        if (c[a] + 1 > patch.hi[a]) continue;
        auto eit = edges_.find(spec_->edge_slot(v, a));
        if (eit == edges_.end() || !eit->second.open_known ||
            eit->second.zeta > prm_.pt.q + 1e-12) {
          open = false;
          return;
        }
      }
    });
    if (!open) return false;
    // Open crossing edge from the patch to a reached shell vertex.
    bool linked = false;
    for_each_vertex(*spec_, patch, [&](i64 v, const std::vector<i64>& c) {
      if (linked) return;
      for (int a = 0; a < prm_.d && !linked; ++a) {
        for (int dr : {+1, -1}) {
          const i64 w = spec_->neighbor(v, a, dr);
          if (w < 0) continue;
          pc = c;
          pc[a] += dr;
          if (!in_T(pc)) continue;
          if (!r_step_.count(w)) continue;
          auto eit = edges_.find(spec_->edge_slot(dr > 0 ? v : w, a));
          if (eit != edges_.end() && eit->second.open_known) {
            linked = true;
            break;
          }
        }
      }
    });
    return linked;
  };

  StepResult res;
  std::vector<i64> z(prm_.d, 0), zg;
  bool feasible = true;
  for (int a = 0; a < prm_.d; ++a) {
    if (scan.lo[a] > scan.hi[a]) {
      feasible = false;
      break;
    }
    z[a] = scan_dir[a] > 0 ? scan.lo[a] : scan.hi[a];
  }
  while (feasible) {
    if (seed_ok(z, zg)) {
      res.success = true;
      res.seed_local = z;
      // The new seed's patch becomes part of the explored region that the
      // next step grows from.
      const Region patch = sublattice_box(*spec_, zg, prm_.m);
      for_each_vertex(*spec_, patch, [&](i64 v, const std::vector<i64>&) {
        r_step_.try_emplace(v, step);
      });
      break;
    }
    int a = prm_.s - 1;  // thin coordinates stay pinned at 0
    while (a >= 0) {
      const bool more =
          scan_dir[a] > 0 ? z[a] < scan.hi[a] : z[a] > scan.lo[a];
      if (more) {
        z[a] += scan_dir[a] > 0 ? 1 : -1;
        break;
      }
      z[a] = scan_dir[a] > 0 ? scan.lo[a] : scan.hi[a];
      --a;
    }
    if (a < 0) break;
  }

  StepTrace tr;
  tr.phase = phase;
  tr.k = step;
  tr.box_center = base_g;
  tr.box_radius = radius;
  tr.success = res.success;
  if (res.success) tr.seed_center = frame_.to_global(res.seed_local);
  tr.edges_touched = touched;
  trace_.push_back(std::move(tr));
  return res;
}

Region RenormEngine::growth_window(const std::vector<i64>& b, int long_axis,
                                   int long_dir, int trans_axis,
                                   i64 trans_anchor) const {
  const i64 n = prm_.n;
  const i64 w = w1();
  Region f;
  f.lo.resize(prm_.d);
  f.hi.resize(prm_.d);
  for (int a = 0; a < prm_.d; ++a) {
    if (a == long_axis) {
      if (long_dir > 0) {
        f.lo[a] = b[a] + n + 1;
        f.hi[a] = b[a] + w;
      } else {
        f.lo[a] = b[a] - w;
        f.hi[a] = b[a] - n - 1;
      }
    } else if (a == trans_axis) {
      if (steer_flip(b[a] - trans_anchor) < 0) {
        f.lo[a] = b[a] - w;
        f.hi[a] = b[a];
      } else {
        f.lo[a] = b[a];
        f.hi[a] = b[a] + w;
      }
    } else if (a < prm_.s) {
      if (steer_flip(b[a]) < 0) {
        f.lo[a] = b[a] - w;
        f.hi[a] = b[a];
      } else {
        f.lo[a] = b[a];
        f.hi[a] = b[a] + w;
      }
    } else {
      f.lo[a] = 0;
      f.hi[a] = 0;
    }
  }
  return f;
}

PhaseOutcome RenormEngine::run_growth_phase(int phase, int long_axis,
                                            int long_dir, int trans_axis,
                                            i64 trans_anchor, i64 band_lo,
                                            i64 band_hi,
                                            const std::vector<i64>& exit_anchor) {
  PhaseOutcome out;
  out.phase = phase;
  const int budget = prm_.budgets[phase - 1];
  for (int stepi = 1; stepi <= budget; ++stepi) {
    const Region f = growth_window(b_, long_axis, long_dir, trans_axis,
                                   trans_anchor);
    // Scan the freshest window end first: shallowest along the growth axis,
    // nearest the current seed transversally, so the chain advances by small
    // increments and never strays from its corridor.
    std::vector<int> dirs(prm_.d, +1);
    Region accept = f;
    // A seed this step finds could close the leg only if the window meets
    // the exit band; only then does its sideways jump sit next to the
    // branch shells and need capping.
    const bool exit_possible = f.lo[long_axis] + prm_.m <= band_hi &&
                               f.hi[long_axis] - prm_.m >= band_lo;
    for (int a = 0; a < prm_.s; ++a) {
      if (a == long_axis) {
        dirs[a] = long_dir;
        continue;
      }
      const i64 center = a == trans_axis ? trans_anchor : 0;
      dirs[a] = steer_flip(b_[a] - center);
      // Never further from the corridor axis than tube_cap(); approach
      // from outside is allowed but must be monotone.
      accept.lo[a] = std::max(accept.lo[a], std::min(center - tube_cap(), b_[a]));
      accept.hi[a] = std::min(accept.hi[a], std::max(center + tube_cap(), b_[a]));
      if (exit_possible) {
        accept.lo[a] = std::max(accept.lo[a], b_[a] - jump_cap());
        accept.hi[a] = std::min(accept.hi[a], b_[a] + jump_cap());
      }
    }
    const StepResult r = run_step(phase, b_, w1(), f, accept, dirs);
    out.steps_used = stepi;
    if (!r.success) {
      out.reason = PhaseOutcome::Fail::StepFailed;
      return out;
    }
    const i64 disp = (r.seed_local[long_axis] - b_[long_axis]) * long_dir;
    PERCLAB_CHECK(disp > prm_.n && disp <= w1(),
                  "seed displacement outside the step window");
    for (int a = prm_.s; a < prm_.d; ++a)
      PERCLAB_CHECK(r.seed_local[a] == 0, "seed left the defect hyperplane");
    b_ = r.seed_local;
    const bool in_band =
        b_[long_axis] >= band_lo && b_[long_axis] <= band_hi;
    bool near = true;
    for (int a = 0; a < prm_.s && near; ++a) {
      if (a == long_axis) continue;
      if (std::llabs(b_[a] - exit_anchor[a]) > slack()) near = false;
    }
    if (in_band && near) {
      out.success = true;
      out.exit_local = b_;
      return out;
    }
  }
  out.reason = PhaseOutcome::Fail::BudgetExhausted;
  return out;
}

PhaseOutcome RenormEngine::run_branch_step(int phase,
                                           const std::vector<i64>& base,
                                           i64 radius, const Region& f_local,
                                           const Region& accept_local,
                                           const std::vector<int>& scan_dir) {
  PhaseOutcome out;
  out.phase = phase;
  out.steps_used = 1;
  const StepResult r =
      run_step(phase, base, radius, f_local, accept_local, scan_dir);
  if (!r.success) {
    out.reason = PhaseOutcome::Fail::StepFailed;
    return out;
  }
  out.success = true;
  out.exit_local = r.seed_local;
  return out;
}

PhaseOutcome RenormEngine::run_phase(int phase) {
  PERCLAB_REQUIRE(phase >= 1 && phase <= 9, "phase index must be 1..9");
  PERCLAB_REQUIRE(phase == phase_done_ + 1,
                  "phases must be run in order after a successful predecessor");
  const i64 n = prm_.n;
  PhaseOutcome out;
  out.phase = phase;

  auto toward_zero = [&](Region& f, int a, i64 width) {
    if (steer_flip(b_[a]) < 0) {
      f.lo[a] = b_[a] - width;
      f.hi[a] = b_[a];
    } else {
      f.lo[a] = b_[a];
      f.hi[a] = b_[a] + width;
    }
  };

  switch (phase) {
    case 1: {
      // Entry seed: the origin reveals its own patch at level q; a handoff
      // seed arrives already certified by the provider's exploration.
      ++k_;
      const std::vector<i64> bg = frame_.to_global(b_);
      const Region patch = sublattice_box(*spec_, bg, prm_.m);
      bool ok = true;
      i64 touched = 0;
      for_each_vertex(*spec_, patch, [&](i64 v, const std::vector<i64>& c) {
        for (int a = 0; a < prm_.s; ++a) {
          if (c[a] + 1 > patch.hi[a]) continue;
          auto eit = edges_.find(spec_->edge_slot(v, a));
          if (eit != edges_.end() && eit->second.open_known) {
            if (entry_origin_)
              continue;
            PERCLAB_CHECK(eit->second.zeta <= prm_.pt.q + 1e-12,
                          "handoff seed lacks a q-open certificate");
            continue;
          }
          if (!entry_origin_) {
            // A handoff patch must arrive fully revealed.
            ok = false;
            continue;
          }
          if (eit != edges_.end() && eit->second.inspections > 0) {
            ok = false;
            continue;
          }
          ++touched;
          if (!probe(v, a, /*boundary=*/false, 1)) ok = false;
        }
      });
      if (ok) {
        for_each_vertex(*spec_, patch, [&](i64 v, const std::vector<i64>&) {
          r_step_.try_emplace(v, k_);
        });
      }
      StepTrace tr;
      tr.phase = 1;
      tr.k = k_;
      tr.box_center = bg;
      tr.box_radius = prm_.m;
      tr.success = ok;
      if (ok) tr.seed_center = bg;
      tr.edges_touched = touched;
      trace_.push_back(std::move(tr));
      out.success = ok;
      if (!ok) out.reason = PhaseOutcome::Fail::SeedCheck;
      break;
    }

    case 2: {
      std::vector<i64> anchor(prm_.d, 0);
      out = run_growth_phase(2, /*long_axis=*/0, /*long_dir=*/+1,
                             /*trans_axis=*/1, /*trans_anchor=*/0,
                             /*band=*/9 * n, ifloor(10.0 * double(n) +
                                                    prm_.alpha * double(n)),
                             anchor);
      if (out.success) c2_ = b_;
      break;
    }

    case 3: {
      // Step A: quarter-turned window below-right of c2 (down branch).
      Region fa;
      fa.lo.assign(prm_.d, 0);
      fa.hi.assign(prm_.d, 0);
      fa.lo[0] = c2_[0];
      fa.hi[0] = c2_[0] + w2();
      fa.lo[1] = c2_[1] - w2();
      fa.hi[1] = c2_[1] - 2 * n - 1;
      b_ = c2_;
      for (int a = 2; a < prm_.s; ++a) toward_zero(fa, a, w2());
      Region aa = fa;
      for (int a = 2; a < prm_.s; ++a) {
        aa.lo[a] = std::max(aa.lo[a], -slack());
        aa.hi[a] = std::min(aa.hi[a], slack());
      }
      std::vector<int> da(prm_.d, +1);
      da[0] = -1;  // land near the far column, where the next leg runs
      da[1] = -1;  // shallow corner of the branch window first
      for (int a = 2; a < prm_.s; ++a) da[a] = steer_flip(c2_[a]);
      PhaseOutcome oa = run_branch_step(3, c2_, w2(), fa, aa, da);
      if (!oa.success) {
        out = oa;
        break;
      }
      c3l_ = oa.exit_local;

      // Step B: reversed quarter-turned window above-left of c2 (up branch).
      Region fb;
      fb.lo.assign(prm_.d, 0);
      fb.hi.assign(prm_.d, 0);
      fb.lo[0] = c2_[0] - w3();
      fb.hi[0] = c2_[0];
      fb.lo[1] = c2_[1] + band3_lo();
      fb.hi[1] = c2_[1] + w3();
      for (int a = 2; a < prm_.s; ++a) {
        // The reversal also reverses the transverse steering.
        if (steer_flip(c2_[a]) < 0) {
          fb.lo[a] = c2_[a];
          fb.hi[a] = c2_[a] + w3();
        } else {
          fb.lo[a] = c2_[a] - w3();
          fb.hi[a] = c2_[a];
        }
      }
      Region ab = fb;
      for (int a = 2; a < prm_.s; ++a) {
        ab.lo[a] = std::max(ab.lo[a], -slack());
        ab.hi[a] = std::min(ab.hi[a], slack());
      }
      std::vector<int> db(prm_.d, +1);
      db[0] = -1;  // stay as close to the c2 column as the window allows
      for (int a = 2; a < prm_.s; ++a) db[a] = -steer_flip(c2_[a]);
      PhaseOutcome ob = run_branch_step(3, c2_, w3(), fb, ab, db);
      ob.steps_used = 2;
      if (!ob.success) {
        out = ob;
        break;
      }
      c3u_ = ob.exit_local;
      out = ob;
      out.exit_local = c3l_;
      break;
    }

    case 4: {
      b_ = c3l_;
      std::vector<i64> anchor(prm_.d, 0);
      anchor[0] = 12 * n;
      out = run_growth_phase(4, /*long_axis=*/1, /*long_dir=*/-1,
                             /*trans_axis=*/0, /*trans_anchor=*/12 * n,
                             -ifloor(10.0 * double(n) + prm_.alpha * double(n)),
                             -9 * n, anchor);
      break;
    }

    case 5:
    case 8: {
      // One linking step from the corner seed: forward along axis 0, with
      // the branch window on the inner side of the corner.
      Region f;
      f.lo.assign(prm_.d, 0);
      f.hi.assign(prm_.d, 0);
      f.lo[0] = b_[0] + 2 * n + 1;
      f.hi[0] = b_[0] + w2();
      if (phase == 5) {
        f.lo[1] = b_[1] - w2();
        f.hi[1] = b_[1];
      } else {
        f.lo[1] = b_[1];
        f.hi[1] = b_[1] + w2();
      }
      for (int a = 2; a < prm_.s; ++a) toward_zero(f, a, w2());
      Region acc = f;
      for (int a = 2; a < prm_.s; ++a) {
        acc.lo[a] = std::max(acc.lo[a], -slack());
        acc.hi[a] = std::min(acc.hi[a], slack());
      }
      std::vector<int> dc(prm_.d, +1);
      dc[1] = phase == 5 ? -1 : +1;  // corner-nearest row first
      for (int a = 2; a < prm_.s; ++a) dc[a] = steer_flip(b_[a]);
      out = run_branch_step(phase, b_, w2(), f, acc, dc);
      if (out.success) b_ = out.exit_local;
      break;
    }

    case 6: {
      std::vector<i64> anchor(prm_.d, 0);
      anchor[1] = -12 * n;
      out = run_growth_phase(6, /*long_axis=*/0, /*long_dir=*/+1,
                             /*trans_axis=*/1, /*trans_anchor=*/-12 * n,
                             24 * n, ifloor(25.0 * double(n) +
                                            prm_.alpha * double(n)),
                             anchor);
      if (out.success) exit_lo_ = b_;
      break;
    }

    case 7: {
      b_ = c3u_;
      std::vector<i64> anchor(prm_.d, 0);
      anchor[0] = 12 * n;
      out = run_growth_phase(7, /*long_axis=*/1, /*long_dir=*/+1,
                             /*trans_axis=*/0, /*trans_anchor=*/12 * n,
                             21 * n, ifloor(22.0 * double(n) +
                                            prm_.alpha * double(n)),
                             anchor);
      break;
    }

    case 9: {
      std::vector<i64> anchor(prm_.d, 0);
      anchor[1] = 24 * n;
      out = run_growth_phase(9, /*long_axis=*/0, /*long_dir=*/+1,
                             /*trans_axis=*/1, /*trans_anchor=*/24 * n,
                             24 * n, ifloor(25.0 * double(n) +
                                            prm_.alpha * double(n)),
                             anchor);
      if (out.success) exit_hi_ = b_;
      break;
    }
  }

  if (out.success) {
    phase_done_ = phase;
  } else {
    phase_done_ = -1;  // blocks further phases of this site
  }
  return out;
}

void RenormEngine::begin_site(i64 x1, i64 x2) {
  PERCLAB_REQUIRE(x1 >= 0, "site first coordinate must be >= 0");
  PERCLAB_REQUIRE(((x1 + x2) % 2 + 2) % 2 == 0,
                  "sites live on the even sublattice");
  PERCLAB_REQUIRE(z_.find({x1, x2}) == z_.end(), "site already determined");
  ++det_counter_;
  det_touched_.clear();
  cur_x1_ = x1;
  cur_x2_ = x2;
  phase_done_ = 0;
  if (x1 == 0 && x2 == 0) {
    entry_origin_ = true;
    cur_upper_ = false;
    frame_ = Frame{blocks_.lower_center(0, 0), false};
    b_.assign(prm_.d, 0);
    return;
  }
  entry_origin_ = false;
  auto lo_in = s_exit_of(x1 - 1, x2 + 1);
  auto hi_in = S_exit_of(x1 - 1, x2 - 1);
  PERCLAB_REQUIRE(lo_in || hi_in, "no entry seed recorded for this site");
  std::vector<i64> seed_g;
  if (lo_in) {
    // Entry through the upper half-block: run the construction in the
    // mirrored frame so the branch directions match the canonical one.
    frame_ = Frame{blocks_.upper_center(x1, x2), true};
    seed_g = *lo_in;
    cur_upper_ = true;
  } else {
    frame_ = Frame{blocks_.lower_center(x1, x2), false};
    seed_g = *hi_in;
    cur_upper_ = false;
  }
  b_ = frame_.to_local(seed_g);
  PERCLAB_CHECK(b_[0] >= 0 && b_[0] <= w1(),
                "entry seed outside the handoff band");
  for (int a = 1; a < prm_.s; ++a)
    PERCLAB_CHECK(std::llabs(b_[a]) <= slack(),
                  "entry seed strayed from the block center");
  for (int a = prm_.s; a < prm_.d; ++a)
    PERCLAB_CHECK(b_[a] == 0, "entry seed left the defect hyperplane");
}

SiteResult RenormEngine::determine_site(i64 x1, i64 x2) {
  begin_site(x1, x2);
  SiteResult res;
  res.x1 = x1;
  res.x2 = x2;
  res.used_upper_seed = cur_upper_;
  bool ok = true;
  try {
    for (int ph = 1; ph <= 9 && ok; ++ph) {
      const PhaseOutcome o = run_phase(ph);
      if (ph >= 2) res.steps_used += o.steps_used;
      if (o.success)
        ++res.phases_completed;
      else
        ok = false;
    }
  } catch (const RenormError& err) {
    ok = false;
    res.gm4_violation = true;
    res.violation_what = err.what();
  }
  // The two branch phases and the corner links are single- or double-step;
  // the growth phases are bounded by their configured budgets.
  const i64 step_cap = i64{prm_.budgets[1]} + 2 + prm_.budgets[3] + 1 +
                       prm_.budgets[5] + prm_.budgets[6] + 1 + prm_.budgets[8];
  PERCLAB_CHECK(res.steps_used <= step_cap,
                "renormalization exceeded its step budget");
  res.z = ok ? 1 : 0;
  if (ok) {
    const std::vector<i64> lo_g = frame_.to_global(exit_lo_);
    const std::vector<i64> hi_g = frame_.to_global(exit_hi_);
    if (!frame_.mirror) {
      res.s_exit = lo_g;
      res.S_exit = hi_g;
    } else {
      res.s_exit = hi_g;
      res.S_exit = lo_g;
    }
    PERCLAB_CHECK(blocks_.lambda_upper(x1 + 1, x2 - 1).contains(res.s_exit),
                  "down-branch exit missed the forward upper half-block");
    PERCLAB_CHECK(blocks_.lambda_lower(x1 + 1, x2 + 1).contains(res.S_exit),
                  "up-branch exit missed the forward lower half-block");
    s_exit_[{x1, x2}] = res.s_exit;
    S_exit_[{x1, x2}] = res.S_exit;
  }
  z_[{x1, x2}] = res.z;
  std::sort(det_touched_.begin(), det_touched_.end());
  res.edges_touched = static_cast<i64>(det_touched_.size());
  res.touched_slots = det_touched_;
  det_touched_.clear();
  return res;
}

std::optional<int> RenormEngine::site_state(i64 x1, i64 x2) const {
  auto it = z_.find({x1, x2});
  if (it == z_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::vector<i64>> RenormEngine::s_exit_of(i64 x1, i64 x2) const {
  auto it = s_exit_.find({x1, x2});
  if (it == s_exit_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::vector<i64>> RenormEngine::S_exit_of(i64 x1, i64 x2) const {
  auto it = S_exit_.find({x1, x2});
  if (it == S_exit_.end()) return std::nullopt;
  return it->second;
}

i64 RenormEngine::certified_above_8delta() const {
  i64 bad = 0;
  for (const auto& [slot, e] : edges_) {
    if (!e.open_known) continue;
    const double cls = threshold(spec_->classify_slot(slot), prm_.pt);
    if (u_of(slot) >= cls + 8.0 * prm_.delta) ++bad;
  }
  return bad;
}

// ---------------------------------------------------------------------------
// Renormalized cluster growth

Trajectory grow_renormalized_cluster(const RenormParams& prm, u64 master_seed,
                                     u64 sample_index, i64 max_sites,
                                     std::unique_ptr<RenormEngine>* engine_out) {
  PERCLAB_REQUIRE(max_sites >= 1, "max_sites must be >= 1");
  auto eng = std::make_unique<RenormEngine>(prm, master_seed, sample_index,
                                            /*max_x1=*/max_sites + 1);
  Trajectory out;
  std::map<std::pair<i64, i64>, int> known;
  std::set<std::pair<i64, i64>> frontier;  // occupied sites, site order
  std::map<i64, std::vector<std::vector<i64>>> col_slots;

  auto determine = [&](i64 x1, i64 x2) {
    SiteResult r = eng->determine_site(x1, x2);
    ++out.determinations;
    known[{x1, x2}] = r.z;
    if (r.z) {
      ++out.successes;
      out.A.push_back({x1, x2});
      frontier.insert({x1, x2});
    } else {
      out.B.push_back({x1, x2});
    }
    // Distinct sites in the same renormalized column must have explored
    // pairwise disjoint edge sets.
    auto& col = col_slots[x1];
    for (const std::vector<i64>& other : col) {
      std::vector<i64> common;
      std::set_intersection(other.begin(), other.end(),
                            r.touched_slots.begin(), r.touched_slots.end(),
                            std::back_inserter(common));
      PERCLAB_CHECK(common.empty(),
                    "equal-column site explorations overlapped");
    }
    col.push_back(std::move(r.touched_slots));
    TrajectoryStep ts;
    ts.t = out.determinations;
    ts.x1 = x1;
    ts.x2 = x2;
    ts.z = r.z;
    ts.rho_hat = out.rho_hat();
    out.steps.push_back(ts);
  };

  determine(0, 0);
  bool extinct = out.A.empty();
  while (!extinct && out.determinations < max_sites) {
    // Least oriented edge with explored tail and unexplored head: tails in
    // site order, the down edge of a tail before its up edge.
    bool found = false;
    i64 nx1 = 0, nx2 = 0;
    for (const auto& [x1, x2] : frontier) {
      for (i64 dh : {-1, +1}) {
        if (!known.count({x1 + 1, x2 + dh})) {
          nx1 = x1 + 1;
          nx2 = x2 + dh;
          found = true;
          break;
        }
      }
      if (found) break;
    }
    if (!found) {
      extinct = true;
      break;
    }
    determine(nx1, nx2);
  }
  out.reached_max = !extinct && out.determinations >= max_sites;
  if (engine_out) *engine_out = std::move(eng);
  return out;
}

// ---------------------------------------------------------------------------
// Separation

i64 separation_threshold(i64 M, i64 k, int s) {
  PERCLAB_REQUIRE(M >= 1, "separation target M must be >= 1");
  PERCLAB_REQUIRE(k >= 0, "separation distance k must be >= 0");
  PERCLAB_REQUIRE(s >= 1, "separation dimension must be >= 1");
  i64 ball = 1;
  for (int i = 0; i < s; ++i) {
    PERCLAB_REQUIRE(ball <= (i64{1} << 60) / (2 * k + 1),
                    "separation threshold overflows");
    ball *= 2 * k + 1;
  }
  return (M - 1) * ball;
}

SeparationResult separation_check(const std::vector<std::vector<i64>>& points,
                                  i64 M, i64 k) {
  PERCLAB_REQUIRE(M >= 1, "separation target M must be >= 1");
  PERCLAB_REQUIRE(k >= 0, "separation distance k must be >= 0");
  SeparationResult out;
  for (const std::vector<i64>& p : points) {
    bool far = true;
    for (const std::vector<i64>& c : out.chosen) {
      PERCLAB_REQUIRE(c.size() == p.size(), "points must share a dimension");
      i64 dist = 0;
      for (size_t i = 0; i < p.size(); ++i)
        dist = std::max<i64>(dist, std::llabs(p[i] - c[i]));
      if (dist <= k) {
        far = false;
        break;
      }
    }
    if (far) {
      out.chosen.push_back(p);
      if (static_cast<i64>(out.chosen.size()) == M) break;
    }
  }
  out.success = static_cast<i64>(out.chosen.size()) >= M;
  return out;
}

}  // namespace perclab
