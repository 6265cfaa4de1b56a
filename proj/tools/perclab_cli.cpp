// Batch front end. Thirteen subcommands dispatch the library's estimators,
// exact oracles, and the renormalization walk from a JSON config (flags
// override fields), write a fixed-column CSV table plus a JSON document
// embedding the fully resolved config, and print a one-line summary.
//
// Exit codes: 0 success, 2 config error (message names the offending
// field), 3 runtime error, 4 failed acceptance assertion (--assert).
//
// Determinism: identical (config, seed) produce byte-identical artifacts
// for any --workers value; parameter grids derive one independent stream
// per point from the master seed by golden-ratio stepping.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "perclab/clusters.hpp"
#include "perclab/estimators.hpp"
#include "perclab/gmrenorm.hpp"
#include "perclab/oracle.hpp"
#include "perclab/records.hpp"

using namespace perclab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr u64 kSeedStep = 0x9E3779B97F4A7C15ull;  // per-grid-point stream step

// ---------------------------------------------------------------------------
// Config document: typed access with unknown-key rejection.

class ConfigDoc {
 public:
  ConfigDoc() : obj_(json::object()) {}

  static ConfigDoc load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    ConfigDoc doc;
    try {
      in >> doc.obj_;
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("config is not valid JSON: " +
                                  std::string(e.what()));
    }
    if (!doc.obj_.is_object())
      throw std::invalid_argument("config root must be a JSON object");
    return doc;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  std::string get_string(const std::string& key, const std::string& def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_string()) fail(key, "expected a string");
    return v->get<std::string>();
  }

  bool get_bool(const std::string& key, bool def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(key, "expected a boolean");
    return v->get<bool>();
  }

  i64 get_i64(const std::string& key, i64 def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number_integer()) fail(key, "expected an integer");
    return v->get<i64>();
  }

  int get_int(const std::string& key, int def) {
    return static_cast<int>(get_i64(key, def));
  }

  u64 get_u64(const std::string& key, u64 def) {
    const json* v = find(key);
    if (!v) return def;
    if (v->is_number_unsigned()) return v->get<u64>();
    if (v->is_number_integer() && v->get<i64>() >= 0)
      return static_cast<u64>(v->get<i64>());
    fail(key, "expected an unsigned integer");
    return def;
  }

  double get_double(const std::string& key, double def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_number()) fail(key, "expected a number");
    return v->get<double>();
  }

  std::vector<i64> get_i64_list(const std::string& key,
                                std::vector<i64> def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_array()) fail(key, "expected an array of integers");
    std::vector<i64> out;
    for (size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_number_integer())
        fail(key + "[" + std::to_string(i) + "]", "expected an integer");
      out.push_back(e.get<i64>());
    }
    return out;
  }

  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> def) {
    const json* v = find(key);
    if (!v) return def;
    if (!v->is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (size_t i = 0; i < v->size(); ++i) {
      const json& e = (*v)[i];
      if (!e.is_number())
        fail(key + "[" + std::to_string(i) + "]", "expected a number");
      out.push_back(e.get<double>());
    }
    return out;
  }

  // Every key must have been consumed by a getter (or belong to the shared
  // option set) by the time a command finishes resolving its config.
  void reject_unknown() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key()))
        throw std::invalid_argument("unknown config key: " + item.key());
    }
  }

 private:
  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }
  [[noreturn]] static void fail(const std::string& path,
                                const std::string& what) {
    throw std::invalid_argument("config key " + path + ": " + what);
  }

  json obj_;
  std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Shared options (flags override config fields).

struct Common {
  std::string config_path;
  u64 seed = 1;
  int workers = 1;
  std::string out;
  std::string format = "csv";
  bool assert_mode = false;
  // CLI presence markers; a passed flag wins over the config field.
  bool seed_flag = false, workers_flag = false, out_flag = false,
       format_flag = false;
};

void resolve_common(ConfigDoc& doc, Common& c) {
  if (!c.seed_flag) c.seed = doc.get_u64("seed", c.seed);
  else doc.get_u64("seed", c.seed);  // consume; flag overrides
  if (!c.workers_flag) c.workers = doc.get_int("workers", c.workers);
  else doc.get_int("workers", c.workers);
  if (!c.out_flag) c.out = doc.get_string("out", c.out);
  else doc.get_string("out", c.out);
  if (!c.format_flag) c.format = doc.get_string("format", c.format);
  else doc.get_string("format", c.format);
  if (!c.assert_mode) c.assert_mode = doc.get_bool("assert", false);
  else doc.get_bool("assert", false);
  if (c.format != "csv" && c.format != "json")
    throw std::invalid_argument("config key format: must be csv or json");
  if (c.workers < 1 || c.workers > 1024)
    throw std::invalid_argument("config key workers: must lie in [1, 1024]");
}

ClassRule parse_rule(const std::string& name) {
  if (name == "defect") return ClassRule::DefectSublattice;
  if (name == "axis") return ClassRule::AxisDirection;
  throw std::invalid_argument("config key rule: must be defect or axis");
}

ParamPoint read_point(ConfigDoc& doc, double p_def, double q_def) {
  const double p = doc.get_double("p", p_def);
  const double q = doc.get_double("q", q_def);
  ParamPoint pt(p, q);
  pt.t = doc.get_double("t", pt.t);
  pt.validate();
  return pt;
}

i64 read_samples(ConfigDoc& doc, i64 def) {
  const i64 n = doc.get_i64("n_samples", def);
  if (n < 1)
    throw std::invalid_argument("config key n_samples: must be >= 1");
  return n;
}

// ---------------------------------------------------------------------------
// Artifacts: CSV table + JSON document (+ optional JSON-lines trace).

struct Artifacts {
  std::string command;
  json config = json::object();
  std::vector<EstimateRecord> rows;
  json summary = json::object();
  std::string trace_jsonl;  // written when nonempty
};

std::string write_artifacts(const Artifacts& art, const Common& c) {
  fs::path main_path = c.out.empty()
                           ? fs::path(art.command + (c.format == "csv"
                                                         ? ".csv"
                                                         : ".json"))
                           : fs::path(c.out);
  fs::path csv_path = main_path;
  fs::path json_path = main_path;
  if (c.format == "csv")
    json_path.replace_extension(".json");
  else
    csv_path.replace_extension(".csv");

  {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + csv_path.string());
    f << csv_header() << "\n";
    for (const EstimateRecord& r : art.rows) f << to_csv_row(r) << "\n";
  }
  json doc;
  doc["command"] = art.command;
  doc["version"] = version();
  doc["config"] = art.config;
  doc["records"] = json::array();
  for (const EstimateRecord& r : art.rows)
    doc["records"].push_back(json::parse(to_json(r)));
  doc["summary"] = art.summary;
  {
    std::ofstream f(json_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + json_path.string());
    f << doc.dump(2) << "\n";
  }
  std::string names = csv_path.string() + ", " + json_path.string();
  if (!art.trace_jsonl.empty()) {
    fs::path tr = main_path;
    tr.replace_extension();
    tr += "_trace.jsonl";
    std::ofstream f(tr, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tr.string());
    f << art.trace_jsonl;
    names += ", " + tr.string();
  }
  return names;
}

// Write artifacts, print the one-line summary, apply the assert verdict.
int finish(Artifacts& art, const Common& c, const std::string& oneline,
           const std::optional<std::string>& assert_fail) {
  if (c.assert_mode) {
    art.summary["assert"] = assert_fail ? "fail" : "pass";
    if (assert_fail) art.summary["assert_reason"] = *assert_fail;
  }
  const std::string paths = write_artifacts(art, c);
  std::cout << art.command << ": " << oneline << " -> " << paths << "\n";
  if (c.assert_mode && assert_fail) {
    std::cerr << art.command << ": assert failed: " << *assert_fail << "\n";
    return 4;
  }
  return 0;
}

int run_failed(const std::string& command, const std::exception& e) {
  std::cerr << command << ": error: " << e.what() << "\n";
  return 3;
}

// Least-squares line fit with coefficient of determination.
struct LineFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
  bool ok = false;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  const size_t n = x.size();
  if (n < 2) return f;
  double sx = 0, sy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / double(n), my = sy / double(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  f.ok = true;
  return f;
}

std::string fmt3(double x) {
  std::ostringstream o;
  o.precision(6);
  o << x;
  return o.str();
}

// Shell and face vertex sets of a region graph, as local ids.
std::vector<int> shell_locals(const RegionGraph& g, i64 radius) {
  std::vector<int> out;
  for (i32 v = 0; v < g.vcount(); ++v) {
    i64 r = 0;
    for (int a = 0; a < g.spec->d(); ++a)
      r = std::max<i64>(r, std::llabs(g.spec->coord(g.vertices[v], a)));
    if (r == radius) out.push_back(v);
  }
  return out;
}

std::vector<int> face_locals(const RegionGraph& g, int axis, bool high) {
  std::vector<int> out;
  const i64 want = high ? g.spec->axis(axis).hi : g.spec->axis(axis).lo;
  for (i32 v = 0; v < g.vcount(); ++v)
    if (g.spec->coord(g.vertices[v], axis) == want) out.push_back(v);
  return out;
}

// ---------------------------------------------------------------------------
// theta: P(o <-> dB_L) on the [-L, L]^d box.

int cmd_theta(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 2);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "axis"));
  const i64 L = doc.get_i64("L", 1);
  if (L < 1) throw std::invalid_argument("config key L: must be >= 1");
  const ParamPoint pt = read_point(doc, 0.3, 0.6);
  const i64 n_samples = read_samples(doc, 100000);
  const LatticeSpec spec = LatticeSpec::box(d, s, L, rule);
  doc.reject_unknown();

  Artifacts art;
  art.command = "theta";
  art.config = {{"d", d},     {"s", s},           {"rule", doc.get_string("rule", "axis")},
                {"L", L},     {"p", pt.p},        {"q", pt.q},
                {"t", pt.t},  {"n_samples", n_samples}, {"seed", c.seed}};
  try {
    EventFn ev = [](SampleView& sv) {
      build_forest(sv.g, sv.open, sv.forest);
      const i32 o = sv.g.local_of(sv.g.spec->vertex_index(
          std::vector<i64>(sv.g.spec->d(), 0)));
      // Touching any face of the box is exactly reaching the radius-L shell.
      const u32 faces = (1u << (2 * sv.g.spec->d())) - 1;
      return (sv.forest.flags_of(o) & faces) != 0u;
    };
    const EstimateRecord r =
        estimate_event(spec, pt, "theta", ev, n_samples, c.seed, c.workers);
    art.rows.push_back(r);
    art.summary = {{"mean", r.mean}, {"stderr", r.se}, {"n", r.n}};

    std::optional<std::string> fail;
    if (c.assert_mode) {
      // Exact enumeration cross-check (tiny instances only): the estimate
      // must sit within four standard errors of the enumerated value.
      const RegionGraph g = build_region_graph(spec, spec.full_region());
      const TinyInstance inst = TinyInstance::from_graph(g, pt);
      if (inst.ne() > 24) {
        fail = "exact cross-check needs at most 24 edges, instance has " +
               std::to_string(inst.ne());
      } else {
        const int origin = g.local_of(
            g.spec->vertex_index(std::vector<i64>(d, 0)));
        const std::vector<int> shell = shell_locals(g, L);
        const double exact = exact_probability(inst, [&](u32 cfg) {
          return config_connects_to_set(inst, cfg, origin, shell);
        });
        art.summary["exact"] = exact;
        if (std::fabs(r.mean - exact) > 4.0 * r.se + 1e-15)
          fail = "estimate " + fmt3(r.mean) + " deviates from exact " +
                 fmt3(exact) + " by more than 4 standard errors";
      }
    }
    return finish(art, c,
                  "mean=" + fmt3(r.mean) + " se=" + fmt3(r.se) +
                      " n=" + std::to_string(r.n),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("theta", e);
  }
}

// ---------------------------------------------------------------------------
// one-arm: P(v <-> dB_m) profile and decay rate.

int cmd_one_arm(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 2);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "axis"));
  const ParamPoint pt = read_point(doc, 0.3, 0.3);
  const std::vector<i64> m_list =
      doc.get_i64_list("m_list", {4, 8, 12, 16, 20, 24});
  if (m_list.empty())
    throw std::invalid_argument("config key m_list: must not be empty");
  for (i64 m : m_list)
    if (m < 1)
      throw std::invalid_argument("config key m_list: radii must be >= 1");
  const i64 n_samples = read_samples(doc, 20000);
  const i64 max_m = *std::max_element(m_list.begin(), m_list.end());
  const LatticeSpec spec = LatticeSpec::box(d, s, max_m, rule);
  doc.reject_unknown();

  Artifacts art;
  art.command = "one-arm";
  art.config = {{"d", d},
                {"s", s},
                {"rule", doc.get_string("rule", "axis")},
                {"p", pt.p},
                {"q", pt.q},
                {"t", pt.t},
                {"m_list", m_list},
                {"n_samples", n_samples},
                {"seed", c.seed}};
  try {
    const OneArmProfile prof =
        one_arm_profile(spec, pt, std::vector<i64>(d, 0), m_list, n_samples,
                        c.seed, c.workers);
    art.rows = prof.points;
    art.summary = {{"lambda_hat", prof.lambda_hat},
                   {"intercept", prof.intercept},
                   {"r2", prof.r2},
                   {"degenerate", prof.degenerate},
                   {"dropped", prof.dropped}};
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (prof.degenerate)
        fail = "decay fit is degenerate (fewer than two usable radii)";
      else if (!(prof.lambda_hat > 0.0))
        fail = "fitted decay rate is not positive: " + fmt3(prof.lambda_hat);
      else if (prof.r2 < 0.98)
        fail = "fit quality r2=" + fmt3(prof.r2) + " below 0.98";
    }
    return finish(art, c,
                  "lambda=" + fmt3(prof.lambda_hat) + " r2=" + fmt3(prof.r2) +
                      " points=" + std::to_string(prof.points.size()),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("one-arm", e);
  }
}

// ---------------------------------------------------------------------------
// crossing: face-to-face crossing probability on the bisection box.

int cmd_crossing(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 2);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "axis"));
  const i64 L = doc.get_i64("L", 16);
  if (L < 2) throw std::invalid_argument("config key L: must be >= 2");
  const int axis = doc.get_int("axis", 0);
  const ParamPoint pt = read_point(doc, 0.5, 0.5);
  const i64 n_samples = read_samples(doc, 2000);
  const LatticeSpec spec = LatticeSpec::slab(d, s, L, (L - 1) / 2, Bc::Free, rule);
  doc.reject_unknown();

  Artifacts art;
  art.command = "crossing";
  art.config = {{"d", d},       {"s", s},
                {"rule", doc.get_string("rule", "axis")},
                {"L", L},       {"axis", axis},
                {"p", pt.p},    {"q", pt.q},
                {"t", pt.t},    {"n_samples", n_samples},
                {"seed", c.seed}};
  try {
    const EstimateRecord r =
        crossing_probability(spec, pt, axis, n_samples, c.seed, c.workers);
    art.rows.push_back(r);
    art.summary = {{"mean", r.mean}, {"stderr", r.se}, {"n", r.n}};
    std::optional<std::string> fail;
    if (c.assert_mode) {
      // Degenerate parameter corners are exact.
      if (pt.p == 1.0 && pt.q == 1.0 && pt.t == 1.0 && r.mean != 1.0)
        fail = "crossing must be certain when every edge is open";
      if (pt.p == 0.0 && pt.q == 0.0 && pt.t == 0.0 && r.mean != 0.0)
        fail = "crossing must be impossible when every edge is closed";
    }
    return finish(art, c,
                  "mean=" + fmt3(r.mean) + " se=" + fmt3(r.se) +
                      " n=" + std::to_string(r.n),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("crossing", e);
  }
}

// ---------------------------------------------------------------------------
// bisect: q_c(p) by stochastic bisection on the full box.

BisectOptions read_bisect_options(ConfigDoc& doc, const Common& c) {
  BisectOptions opt;
  opt.tol = doc.get_double("tol", opt.tol);
  opt.samples_per_step = doc.get_i64("samples_per_step", opt.samples_per_step);
  opt.doubling_cap = doc.get_int("doubling_cap", opt.doubling_cap);
  opt.axis = doc.get_int("axis", opt.axis);
  opt.with_drift = doc.get_bool("with_drift", opt.with_drift);
  opt.workers = c.workers;
  if (opt.tol <= 0.0 || opt.tol >= 1.0)
    throw std::invalid_argument("config key tol: must lie in (0, 1)");
  if (opt.samples_per_step < 1)
    throw std::invalid_argument("config key samples_per_step: must be >= 1");
  return opt;
}

json bisect_json(const BisectResult& r) {
  json o = {{"q_hat", r.q_hat},         {"lo", r.lo},
            {"hi", r.hi},               {"hit_lower", r.hit_lower},
            {"hit_upper", r.hit_upper}, {"L", r.L},
            {"evaluations", r.record.n}};
  if (r.L_drift > 0) {
    o["L_drift"] = r.L_drift;
    o["q_hat_drift"] = r.q_hat_drift;
    o["drift"] = r.drift;
  }
  json steps = json::array();
  for (const BisectStep& st : r.steps)
    steps.push_back({{"q", st.q},
                     {"mean", st.mean},
                     {"se", st.se},
                     {"n", st.n},
                     {"lo", st.lo},
                     {"hi", st.hi}});
  o["steps"] = steps;
  return o;
}

int cmd_bisect(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 2);
  const int s = doc.get_int("s", 2);
  const std::string rule_name = doc.get_string("rule", "axis");
  const ClassRule rule = parse_rule(rule_name);
  const double p = doc.get_double("p", 0.3);
  const i64 L = doc.get_i64("L", 64);
  const double assert_tol = doc.get_double("assert_tol", 0.02);
  const BisectOptions opt = read_bisect_options(doc, c);
  doc.reject_unknown();

  Artifacts art;
  art.command = "bisect";
  art.config = {{"d", d},
                {"s", s},
                {"rule", rule_name},
                {"p", p},
                {"L", L},
                {"tol", opt.tol},
                {"samples_per_step", opt.samples_per_step},
                {"doubling_cap", opt.doubling_cap},
                {"axis", opt.axis},
                {"with_drift", opt.with_drift},
                {"assert_tol", assert_tol},
                {"seed", c.seed}};
  try {
    const BisectResult r = bisect_critical_q(d, s, rule, p, L, opt, c.seed);
    art.rows.push_back(r.record);
    art.summary = bisect_json(r);
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (r.hit_lower || r.hit_upper)
        fail = "the crossing point left the [0, 1] bracket";
      else if (rule == ClassRule::AxisDirection &&
               std::fabs(r.q_hat - (1.0 - p)) > assert_tol)
        fail = "q_hat=" + fmt3(r.q_hat) + " misses 1-p=" + fmt3(1.0 - p) +
               " by more than " + fmt3(assert_tol);
    }
    return finish(art, c,
                  "q_hat=" + fmt3(r.q_hat) + " bracket=[" + fmt3(r.lo) + "," +
                      fmt3(r.hi) + "]",
                  fail);
  } catch (const std::exception& e) {
    return run_failed("bisect", e);
  }
}

// ---------------------------------------------------------------------------
// qc-curve: q_c(p) over a p grid; strict decrease check.

int cmd_qc_curve(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 3);
  const int s = doc.get_int("s", 2);
  const std::string rule_name = doc.get_string("rule", "defect");
  const ClassRule rule = parse_rule(rule_name);
  const std::vector<double> p_list =
      doc.get_double_list("p_list", {0.10, 0.18});
  if (p_list.size() < 2)
    throw std::invalid_argument("config key p_list: need at least two points");
  const i64 L = doc.get_i64("L", 24);
  const BisectOptions opt = read_bisect_options(doc, c);
  doc.reject_unknown();

  Artifacts art;
  art.command = "qc-curve";
  art.config = {{"d", d},
                {"s", s},
                {"rule", rule_name},
                {"p_list", p_list},
                {"L", L},
                {"tol", opt.tol},
                {"samples_per_step", opt.samples_per_step},
                {"doubling_cap", opt.doubling_cap},
                {"axis", opt.axis},
                {"with_drift", opt.with_drift},
                {"seed", c.seed}};
  try {
    json points = json::array();
    std::vector<BisectResult> results;
    for (size_t i = 0; i < p_list.size(); ++i) {
      const u64 point_seed = c.seed + kSeedStep * (u64(i) + 1);
      BisectResult r =
          bisect_critical_q(d, s, rule, p_list[i], L, opt, point_seed);
      r.record.p = p_list[i];
      art.rows.push_back(r.record);
      json pj = bisect_json(r);
      pj["p"] = p_list[i];
      points.push_back(pj);
      results.push_back(std::move(r));
    }
    bool decreasing = true, disjoint = true;
    for (size_t i = 0; i + 1 < results.size(); ++i) {
      if (!(results[i].q_hat > results[i + 1].q_hat)) decreasing = false;
      if (!(results[i].lo > results[i + 1].hi)) disjoint = false;
    }
    art.summary = {{"points", points},
                   {"strictly_decreasing", decreasing},
                   {"brackets_disjoint", disjoint}};
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (!decreasing)
        fail = "q_hat is not strictly decreasing along the p grid";
      else if (!disjoint)
        fail = "adjacent q_c brackets overlap";
    }
    std::string line = "q_hat=";
    for (size_t i = 0; i < results.size(); ++i)
      line += (i ? "," : "") + fmt3(results[i].q_hat);
    return finish(art, c, line + " decreasing=" + (decreasing ? "yes" : "no"),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("qc-curve", e);
  }
}

// ---------------------------------------------------------------------------
// slab-curve: q_c^N(p) over a slab-thickness grid, with a full-box anchor.

int cmd_slab_curve(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 3);
  const int s = doc.get_int("s", 2);
  const std::string rule_name = doc.get_string("rule", "defect");
  const ClassRule rule = parse_rule(rule_name);
  const double p = doc.get_double("p", 0.15);
  const std::vector<i64> n_list = doc.get_i64_list("N_list", {0, 1, 2, 4, 8});
  if (n_list.empty())
    throw std::invalid_argument("config key N_list: must not be empty");
  for (i64 n : n_list)
    if (n < 0)
      throw std::invalid_argument("config key N_list: thickness must be >= 0");
  const i64 L = doc.get_i64("L", 24);
  const bool full_box = doc.get_bool("full_box", true);
  const BisectOptions opt = read_bisect_options(doc, c);
  doc.reject_unknown();

  Artifacts art;
  art.command = "slab-curve";
  art.config = {{"d", d},
                {"s", s},
                {"rule", rule_name},
                {"p", p},
                {"N_list", n_list},
                {"L", L},
                {"full_box", full_box},
                {"tol", opt.tol},
                {"samples_per_step", opt.samples_per_step},
                {"doubling_cap", opt.doubling_cap},
                {"axis", opt.axis},
                {"with_drift", opt.with_drift},
                {"seed", c.seed}};
  try {
    json points = json::array();
    std::vector<BisectResult> results;
    for (size_t i = 0; i < n_list.size(); ++i) {
      const u64 point_seed = c.seed + kSeedStep * (u64(i) + 1);
      BisectResult r =
          slab_critical_curve(d, s, p, L, n_list[i], opt, point_seed, rule);
      art.rows.push_back(r.record);
      json pj = bisect_json(r);
      pj["N"] = n_list[i];
      points.push_back(pj);
      results.push_back(std::move(r));
    }
    std::optional<BisectResult> full;
    if (full_box) {
      const u64 point_seed = c.seed + kSeedStep * (u64(n_list.size()) + 1);
      full = bisect_critical_q(d, s, rule, p, L, opt, point_seed);
      art.rows.push_back(full->record);
      json pj = bisect_json(*full);
      pj["N"] = -1;
      points.push_back(pj);
    }
    // Monotone within brackets: the next estimate may not exceed the
    // previous one by more than the two half-widths.
    bool monotone = true;
    for (size_t i = 0; i + 1 < results.size(); ++i) {
      const double slack = (results[i].hi - results[i].lo) / 2 +
                           (results[i + 1].hi - results[i + 1].lo) / 2;
      if (results[i + 1].q_hat > results[i].q_hat + slack) monotone = false;
    }
    double anchor_gap = 0.0;
    bool anchored = true;
    if (full) {
      const BisectResult& last = results.back();
      const double sigma = std::hypot((last.hi - last.lo) / 2,
                                      (full->hi - full->lo) / 2);
      anchor_gap = std::fabs(last.q_hat - full->q_hat);
      anchored = anchor_gap <= 2.0 * sigma + 1e-12;
      art.summary["full_box_q_hat"] = full->q_hat;
      art.summary["anchor_gap"] = anchor_gap;
      art.summary["anchored"] = anchored;
    }
    art.summary["points"] = points;
    art.summary["monotone"] = monotone;
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (!monotone)
        fail = "q_hat^N increases beyond its brackets along the N grid";
      else if (!anchored)
        fail = "thickest slab misses the full-box estimate by " +
               fmt3(anchor_gap);
    }
    std::string line = "q_hat^N=";
    for (size_t i = 0; i < results.size(); ++i)
      line += (i ? "," : "") + fmt3(results[i].q_hat);
    if (full) line += " full=" + fmt3(full->q_hat);
    return finish(art, c, line, fail);
  } catch (const std::exception& e) {
    return run_failed("slab-curve", e);
  }
}

// ---------------------------------------------------------------------------
// uniqueness: P(exactly one spanning cluster of macroscopic size).

int cmd_uniqueness(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 3);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "defect"));
  const i64 L = doc.get_i64("L", 16);
  if (L < 2) throw std::invalid_argument("config key L: must be >= 2");
  const int axis = doc.get_int("axis", 0);
  const double min_frac = doc.get_double("min_frac", 0.01);
  if (min_frac < 0.0 || min_frac > 1.0)
    throw std::invalid_argument("config key min_frac: must lie in [0, 1]");
  const double assert_min = doc.get_double("assert_min", 0.95);
  const ParamPoint pt = read_point(doc, 0.35, 0.9);
  const i64 n_samples = read_samples(doc, 500);
  const LatticeSpec spec = LatticeSpec::slab(d, s, L, (L - 1) / 2, Bc::Free, rule);
  doc.reject_unknown();

  Artifacts art;
  art.command = "uniqueness";
  art.config = {{"d", d},
                {"s", s},
                {"rule", doc.get_string("rule", "defect")},
                {"L", L},
                {"axis", axis},
                {"min_frac", min_frac},
                {"assert_min", assert_min},
                {"p", pt.p},
                {"q", pt.q},
                {"t", pt.t},
                {"n_samples", n_samples},
                {"seed", c.seed}};
  try {
    EventFn ev = [axis, min_frac](SampleView& sv) {
      build_forest(sv.g, sv.open, sv.forest);
      const i64 min_size = std::max<i64>(
          1, static_cast<i64>(std::ceil(min_frac * sv.g.vcount())));
      return count_spanning_clusters(sv.g, sv.forest, axis, min_size) == 1;
    };
    const EstimateRecord r = estimate_event(spec, pt, "uniqueness", ev,
                                            n_samples, c.seed, c.workers);
    art.rows.push_back(r);
    art.summary = {{"fraction", r.mean}, {"stderr", r.se}, {"n", r.n}};
    std::optional<std::string> fail;
    if (c.assert_mode && r.mean < assert_min)
      fail = "unique-spanning fraction " + fmt3(r.mean) + " below " +
             fmt3(assert_min);
    return finish(art, c, "fraction=" + fmt3(r.mean) + " se=" + fmt3(r.se),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("uniqueness", e);
  }
}

// ---------------------------------------------------------------------------
// trifurcations: mean count vs box scale, with a log-log exponent fit.

int cmd_trifurcations(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 3);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "defect"));
  const ParamPoint pt = read_point(doc, 0.12, 0.55);
  const std::vector<i64> n_list =
      doc.get_i64_list("n_list", {8, 12, 16, 24, 32});
  if (n_list.size() < 2)
    throw std::invalid_argument("config key n_list: need at least two scales");
  for (i64 n : n_list)
    if (n < 2)
      throw std::invalid_argument("config key n_list: scales must be >= 2");
  const i64 n_samples = read_samples(doc, 200);
  const double exp_lo = doc.get_double("exponent_lo", 1.4);
  const double exp_hi = doc.get_double("exponent_hi", 2.6);
  doc.reject_unknown();

  Artifacts art;
  art.command = "trifurcations";
  art.config = {{"d", d},
                {"s", s},
                {"rule", doc.get_string("rule", "defect")},
                {"p", pt.p},
                {"q", pt.q},
                {"t", pt.t},
                {"n_list", n_list},
                {"n_samples", n_samples},
                {"exponent_lo", exp_lo},
                {"exponent_hi", exp_hi},
                {"seed", c.seed}};
  try {
    std::vector<double> lx, ly;
    json dropped = json::array();
    for (size_t i = 0; i < n_list.size(); ++i) {
      const u64 point_seed = c.seed + kSeedStep * (u64(i) + 1);
      const LatticeSpec spec = LatticeSpec::box(d, s, n_list[i], rule);
      EstimateRecord r = trifurcation_mean(spec, pt, spec.full_region(),
                                           n_samples, point_seed, c.workers);
      r.L = n_list[i];
      art.rows.push_back(r);
      if (r.mean > 0.0) {
        lx.push_back(std::log(double(n_list[i])));
        ly.push_back(std::log(r.mean));
      } else {
        dropped.push_back(n_list[i]);
      }
    }
    const LineFit fit = fit_line(lx, ly);
    art.summary = {{"exponent", fit.slope},
                   {"r2", fit.r2},
                   {"usable_points", lx.size()},
                   {"dropped", dropped},
                   {"boundary_bound_checked", true}};
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (!fit.ok)
        fail = "fewer than two scales with positive mean counts";
      else if (fit.slope < exp_lo || fit.slope > exp_hi)
        fail = "exponent " + fmt3(fit.slope) + " outside [" + fmt3(exp_lo) +
               ", " + fmt3(exp_hi) + "]";
    }
    return finish(art, c,
                  "exponent=" + fmt3(fit.slope) + " r2=" + fmt3(fit.r2) +
                      " scales=" + std::to_string(n_list.size()),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("trifurcations", e);
  }
}

// ---------------------------------------------------------------------------
// certificate: phi_v <= 1/2 subcriticality certificate, single point or grid.

int cmd_certificate(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 3);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "defect"));
  const i64 L = doc.get_i64("L", 4);
  if (L < 1) throw std::invalid_argument("config key L: must be >= 1");
  const i64 n_samples = read_samples(doc, 2000);
  const bool grid_mode = doc.has("p_list") || doc.has("q_list");
  const std::vector<double> p_list =
      doc.get_double_list("p_list", {doc.get_double("p", 0.05)});
  const std::vector<double> q_list =
      doc.get_double_list("q_list", {doc.get_double("q", 0.05)});
  doc.reject_unknown();

  Artifacts art;
  art.command = "certificate";
  art.config = {{"d", d},
                {"s", s},
                {"rule", doc.get_string("rule", "defect")},
                {"L", L},
                {"p_list", p_list},
                {"q_list", q_list},
                {"n_samples", n_samples},
                {"seed", c.seed}};
  try {
    json points = json::array();
    // holds[i][j] for (p_list[i], q_list[j]).
    std::vector<std::vector<bool>> holds(p_list.size());
    size_t idx = 0;
    for (size_t i = 0; i < p_list.size(); ++i) {
      for (size_t j = 0; j < q_list.size(); ++j) {
        const u64 point_seed = c.seed + kSeedStep * (u64(idx++) + 1);
        const ParamPoint pt(p_list[i], q_list[j]);
        pt.validate();
        const Certificate cert = subcritical_certificate(
            d, s, rule, pt, L, n_samples, point_seed, c.workers);
        double worst = 0.0;
        for (const EstimateRecord& r : cert.phi) {
          art.rows.push_back(r);
          worst = std::max(worst, r.ci_hi());
        }
        holds[i].push_back(cert.holds);
        points.push_back({{"p", pt.p},
                          {"q", pt.q},
                          {"holds", cert.holds},
                          {"k_prime", cert.k_prime},
                          {"worst_phi_ucb", worst}});
      }
    }
    // Downward closure: holding at a point forces holding at every point
    // with both parameters no larger.
    bool closed_down = true;
    for (size_t i = 0; i < p_list.size(); ++i)
      for (size_t j = 0; j < q_list.size(); ++j)
        if (holds[i][j]) {
          for (size_t a = 0; a <= i && closed_down; ++a)
            for (size_t b = 0; b <= j; ++b)
              if (p_list[a] <= p_list[i] && q_list[b] <= q_list[j] &&
                  !holds[a][b]) {
                closed_down = false;
                break;
              }
        }
    art.summary = {{"points", points}, {"monotone_closed_down", closed_down}};
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (grid_mode && !closed_down)
        fail = "holding region is not closed downward on the grid";
      if (!grid_mode && !holds[0][0])
        fail = "certificate does not hold at the requested point";
    }
    std::string line = grid_mode
                           ? "grid=" + std::to_string(p_list.size()) + "x" +
                                 std::to_string(q_list.size()) +
                                 " closed_down=" + (closed_down ? "yes" : "no")
                           : std::string("holds=") +
                                 (holds[0][0] ? "yes" : "no");
    return finish(art, c, line, fail);
  } catch (const std::exception& e) {
    return run_failed("certificate", e);
  }
}

// ---------------------------------------------------------------------------
// gm-event: seed-window statistics and the conditional boost-edge event.

int cmd_gm_event(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 3);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "defect"));
  const ParamPoint pt = read_point(doc, 0.3, 0.7);
  GMEventSpec ev;
  ev.alpha = doc.get_double("alpha", 0.5);
  ev.beta = doc.get_double("beta", 1.0);
  ev.m = doc.get_i64("m", 1);
  ev.n = doc.get_i64("n", 8);
  const std::string kind = doc.get_string("kind", "seed");
  if (kind == "u") ev.kind = GMEventKind::UCount;
  else if (kind == "v") ev.kind = GMEventKind::VCount;
  else if (kind == "seed") ev.kind = GMEventKind::SeedReach;
  else if (kind == "conditional") ev.kind = GMEventKind::FiniteSizeConditional;
  else
    throw std::invalid_argument(
        "config key kind: must be u, v, seed, or conditional");
  const double delta = doc.get_double("delta", 0.1);
  const double gamma_level = doc.get_double("gamma_level", 0.05);
  const i64 r_radius = doc.get_i64("r_radius", ev.m);
  const i64 n_samples = read_samples(doc, 2000);
  if (ev.kind == GMEventKind::FiniteSizeConditional) {
    if (delta < 0.0 || delta > 1.0)
      throw std::invalid_argument("config key delta: must lie in [0, 1]");
    if (gamma_level < 0.0 || gamma_level > 1.0 - delta)
      throw std::invalid_argument(
          "config key gamma_level: must lie in [0, 1-delta]");
    if (r_radius < ev.m)
      throw std::invalid_argument(
          "config key r_radius: must cover the seed half-width m");
  }
  doc.reject_unknown();

  Artifacts art;
  art.command = "gm-event";
  art.config = {{"d", d},         {"s", s},
                {"rule", doc.get_string("rule", "defect")},
                {"p", pt.p},      {"q", pt.q},
                {"t", pt.t},      {"alpha", ev.alpha},
                {"beta", ev.beta}, {"m", ev.m},
                {"n", ev.n},      {"kind", kind},
                {"delta", delta}, {"gamma_level", gamma_level},
                {"r_radius", r_radius}, {"n_samples", n_samples},
                {"seed", c.seed}};
  try {
    EstimateRecord r;
    if (ev.kind == GMEventKind::FiniteSizeConditional) {
      std::vector<i64> radii(d, 0);
      for (int a = 0; a < s; ++a) radii[a] = r_radius;
      const Region rr = Region::ball_mixed(std::vector<i64>(d, 0), radii);
      r = finite_size_conditional(
          d, s, rule, pt, ev, rr, [gamma_level](i64) { return gamma_level; },
          delta, n_samples, c.seed, c.workers);
    } else {
      r = gm_seed_event(d, s, rule, pt, ev, n_samples, c.seed, c.workers);
    }
    art.rows.push_back(r);
    art.summary = {{"kind", kind},
                   {"mean", r.mean},
                   {"stderr", r.se},
                   {"n", r.n}};
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (ev.kind == GMEventKind::FiniteSizeConditional && delta == 0.0 &&
          r.mean != 0.0)
        fail = "a zero boost must make the crossing event impossible";
      if (r.mean < 0.0) fail = "negative mean";
    }
    return finish(art, c,
                  "kind=" + kind + " mean=" + fmt3(r.mean) +
                      " se=" + fmt3(r.se),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("gm-event", e);
  }
}

// ---------------------------------------------------------------------------
// renorm: site determinations or renormalized cluster growth.

RenormParams read_renorm_params(ConfigDoc& doc) {
  const std::string preset = doc.get_string("preset", "desk");
  RenormParams prm;
  if (preset == "desk") prm = RenormParams::desk();
  else if (preset == "desk_small") prm = RenormParams::desk_small();
  else if (preset == "paper_geometry")
    prm = RenormParams::paper_geometry(doc.get_i64("n", 400),
                                       doc.get_double("eta", 0.8));
  else
    throw std::invalid_argument(
        "config key preset: must be desk, desk_small, or paper_geometry");
  prm.d = doc.get_int("d", prm.d);
  prm.s = doc.get_int("s", prm.s);
  prm.m = doc.get_i64("m", prm.m);
  prm.n = doc.get_i64("n", prm.n);
  prm.alpha = doc.get_double("alpha", prm.alpha);
  prm.beta3 = doc.get_double("beta3", prm.beta3);
  prm.delta = doc.get_double("delta", prm.delta);
  prm.pt.p = doc.get_double("p", prm.pt.p);
  prm.pt.q = doc.get_double("q", prm.pt.q);
  prm.pt.t = doc.get_double("t", prm.pt.p);
  prm.pc_site = doc.get_double("pc_site", prm.pc_site);
  prm.force_origin_seed =
      doc.get_bool("force_origin_seed", prm.force_origin_seed);
  prm.assert_inspection_cap =
      doc.get_bool("assert_inspection_cap", prm.assert_inspection_cap);
  const std::vector<i64> budgets = doc.get_i64_list("budgets", {});
  if (!budgets.empty()) {
    if (budgets.size() != prm.budgets.size())
      throw std::invalid_argument("config key budgets: expected 9 entries");
    for (size_t i = 0; i < budgets.size(); ++i)
      prm.budgets[i] = static_cast<int>(budgets[i]);
  }
  prm.validate();
  return prm;
}

int cmd_renorm(ConfigDoc& doc, Common& c) {
  const RenormParams prm = read_renorm_params(doc);
  const std::string mode = doc.get_string("mode", "site");
  if (mode != "site" && mode != "grow")
    throw std::invalid_argument("config key mode: must be site or grow");
  const i64 n_sites = doc.get_i64("n_sites", 10);
  const i64 max_sites = doc.get_i64("max_sites", 20);
  const u64 sample_index = doc.get_u64("sample_index", 0);
  if (n_sites < 1)
    throw std::invalid_argument("config key n_sites: must be >= 1");
  if (max_sites < 1)
    throw std::invalid_argument("config key max_sites: must be >= 1");
  doc.reject_unknown();

  Artifacts art;
  art.command = "renorm";
  art.config = {{"preset", doc.get_string("preset", "desk")},
                {"mode", mode},
                {"d", prm.d},
                {"s", prm.s},
                {"m", prm.m},
                {"n", prm.n},
                {"alpha", prm.alpha},
                {"beta3", prm.beta3_eff()},
                {"delta", prm.delta},
                {"p", prm.pt.p},
                {"q", prm.pt.q},
                {"t", prm.pt.t},
                {"pc_site", prm.pc_site},
                {"force_origin_seed", prm.force_origin_seed},
                {"assert_inspection_cap", prm.assert_inspection_cap},
                {"n_sites", n_sites},
                {"max_sites", max_sites},
                {"sample_index", sample_index},
                {"seed", c.seed}};
  try {
    EstimateRecord row;
    row.d = prm.d;
    row.s = prm.s;
    row.L = prm.n;
    row.p = prm.pt.p;
    row.q = prm.pt.q;
    row.seed = c.seed;
    std::optional<std::string> fail;

    if (mode == "site") {
      i64 occupied = 0, violations = 0, cap_hits = 0, above8 = 0;
      i32 max_insp = 0;
      json per_site = json::array();
      for (i64 i = 0; i < n_sites; ++i) {
        RenormEngine eng(prm, c.seed, static_cast<u64>(i), 1);
        const SiteResult r = eng.determine_site(0, 0);
        occupied += r.z;
        violations += r.gm4_violation ? 1 : 0;
        cap_hits += eng.gamma_cap_hits();
        above8 += eng.certified_above_8delta();
        max_insp = std::max(max_insp, eng.max_inspections());
        per_site.push_back({{"sample", i},
                            {"z", r.z},
                            {"phases_completed", r.phases_completed},
                            {"steps_used", r.steps_used},
                            {"edges_touched", r.edges_touched},
                            {"violation", r.violation_what}});
      }
      const double rate = double(occupied) / double(n_sites);
      row.event = "renorm_site_rate";
      row.mean = rate;
      row.se = std::sqrt(rate * (1.0 - rate) / double(n_sites));
      row.n = n_sites;
      art.rows.push_back(row);
      art.summary = {{"sites", n_sites},
                     {"occupied", occupied},
                     {"rate", rate},
                     {"lambda_target", prm.lambda_target()},
                     {"violations", violations},
                     {"max_inspections", max_insp},
                     {"gamma_cap_hits", cap_hits},
                     {"certified_above_8delta", above8},
                     {"per_site", per_site}};
      if (c.assert_mode) {
        if (violations > 0)
          fail = std::to_string(violations) + " structural violations";
        else if (above8 > 0)
          fail = "open certificates above class + 8*delta: " +
                 std::to_string(above8);
      }
      return finish(art, c,
                    "rate=" + fmt3(rate) + " (" + std::to_string(occupied) +
                        "/" + std::to_string(n_sites) +
                        ") violations=" + std::to_string(violations),
                    fail);
    }

    // grow mode
    std::unique_ptr<RenormEngine> eng;
    const Trajectory t =
        grow_renormalized_cluster(prm, c.seed, sample_index, max_sites, &eng);
    i64 violations = 0;
    json sites = json::array();
    for (const TrajectoryStep& st : t.steps)
      sites.push_back(
          {{"t", st.t}, {"x1", st.x1}, {"x2", st.x2}, {"z", st.z}});
    const i64 above8 = eng ? eng->certified_above_8delta() : 0;
    row.event = "renorm_growth_rate";
    row.mean = t.rho_hat();
    row.se = t.determinations > 0
                 ? std::sqrt(t.rho_hat() * (1.0 - t.rho_hat()) /
                             double(t.determinations))
                 : 0.0;
    row.n = t.determinations;
    art.rows.push_back(row);
    art.summary = {{"determinations", t.determinations},
                   {"successes", t.successes},
                   {"rho_hat", t.rho_hat()},
                   {"reached_max", t.reached_max},
                   {"cluster_size", t.A.size()},
                   {"rejected", t.B.size()},
                   {"lambda_target", prm.lambda_target()},
                   {"max_inspections", eng ? eng->max_inspections() : 0},
                   {"gamma_cap_hits", eng ? eng->gamma_cap_hits() : 0},
                   {"certified_above_8delta", above8},
                   {"sites", sites}};
    if (eng) art.trace_jsonl = trace_to_jsonl(eng->trace());
    if (c.assert_mode && above8 > 0)
      fail = "open certificates above class + 8*delta: " +
             std::to_string(above8);
    return finish(art, c,
                  "rho=" + fmt3(t.rho_hat()) + " cluster=" +
                      std::to_string(t.A.size()) + " determinations=" +
                      std::to_string(t.determinations),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("renorm", e);
  }
}

// ---------------------------------------------------------------------------
// oracle: exact enumeration of theta / crossing on tiny instances.

int cmd_oracle(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 2);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "axis"));
  const i64 L = doc.get_i64("L", 1);
  if (L < 1) throw std::invalid_argument("config key L: must be >= 1");
  const int axis = doc.get_int("axis", 0);
  const std::string event = doc.get_string("event", "theta");
  if (event != "theta" && event != "crossing")
    throw std::invalid_argument("config key event: must be theta or crossing");
  const ParamPoint pt = read_point(doc, 0.3, 0.6);
  const LatticeSpec spec =
      event == "theta"
          ? LatticeSpec::box(d, s, L, rule)
          : LatticeSpec::slab(d, s, L, (L - 1) / 2, Bc::Free, rule);
  doc.reject_unknown();

  Artifacts art;
  art.command = "oracle";
  art.config = {{"d", d},     {"s", s},
                {"rule", doc.get_string("rule", "axis")},
                {"L", L},     {"axis", axis},
                {"event", event},
                {"p", pt.p},  {"q", pt.q},
                {"t", pt.t},  {"seed", c.seed}};
  try {
    const RegionGraph g = build_region_graph(spec, spec.full_region());
    const TinyInstance inst = TinyInstance::from_graph(g, pt);
    ConfigEvent ev;
    if (event == "theta") {
      const int origin =
          g.local_of(g.spec->vertex_index(std::vector<i64>(d, 0)));
      if (origin < 0) throw std::runtime_error("origin left the region");
      const std::vector<int> shell = shell_locals(g, L);
      ev = [&inst, origin, shell](u32 cfg) {
        return config_connects_to_set(inst, cfg, origin, shell);
      };
    } else {
      const std::vector<int> lo = face_locals(g, axis, false);
      const std::vector<int> hi = face_locals(g, axis, true);
      ev = [&inst, lo, hi](u32 cfg) {
        for (int a : lo)
          if (config_connects_to_set(inst, cfg, a, hi)) return true;
        return false;
      };
    }
    const double exact = exact_probability(inst, ev);
    const double cross = exact_expected_branching(
        inst, [&ev](u32 cfg) { return ev(cfg) ? 1.0 : 0.0; });
    const double mass =
        exact_probability(inst, [](u32) { return true; });

    EstimateRecord r;
    r.event = "oracle_" + event;
    r.d = d;
    r.s = s;
    r.L = L;
    r.p = pt.p;
    r.q = pt.q;
    r.mean = exact;
    r.se = 0.0;
    r.n = i64{1} << inst.ne();
    r.seed = c.seed;
    art.rows.push_back(r);
    art.summary = {{"exact", exact},
                   {"cross_check", cross},
                   {"difference", std::fabs(exact - cross)},
                   {"total_mass", mass},
                   {"edges", inst.ne()},
                   {"configurations", r.n}};
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (std::fabs(exact - cross) > 1e-12)
        fail = "the two enumerators disagree by " +
               fmt3(std::fabs(exact - cross));
      else if (std::fabs(mass - 1.0) > 1e-12)
        fail = "total probability mass " + fmt3(mass) + " is not 1";
    }
    return finish(art, c,
                  "exact=" + fmt3(exact) + " edges=" +
                      std::to_string(inst.ne()),
                  fail);
  } catch (const std::exception& e) {
    return run_failed("oracle", e);
  }
}

// ---------------------------------------------------------------------------
// mtp-check: mass-transport balance on a torus.

int cmd_mtp_check(ConfigDoc& doc, Common& c) {
  const int d = doc.get_int("d", 3);
  const int s = doc.get_int("s", 2);
  const ClassRule rule = parse_rule(doc.get_string("rule", "defect"));
  const i64 L = doc.get_i64("L", 6);
  if (L < 3)
    throw std::invalid_argument("config key L: periodic extent must be >= 3");
  const i64 half = doc.get_i64("half_thickness", 1);
  if (half < 0)
    throw std::invalid_argument("config key half_thickness: must be >= 0");
  const std::string transport = doc.get_string("transport", "same-cluster");
  if (transport != "same-cluster" && transport != "nearest-h")
    throw std::invalid_argument(
        "config key transport: must be same-cluster or nearest-h");
  const std::string mode = doc.get_string("mode", "mc");
  if (mode != "exact" && mode != "mc")
    throw std::invalid_argument("config key mode: must be exact or mc");
  const ParamPoint pt = read_point(doc, 0.3, 0.6);
  const i64 n_samples = read_samples(doc, 20000);
  const LatticeSpec spec =
      LatticeSpec::slab(d, s, L, half, Bc::Periodic, rule);
  doc.reject_unknown();

  Artifacts art;
  art.command = "mtp-check";
  art.config = {{"d", d},
                {"s", s},
                {"rule", doc.get_string("rule", "defect")},
                {"L", L},
                {"half_thickness", half},
                {"transport", transport},
                {"mode", mode},
                {"p", pt.p},
                {"q", pt.q},
                {"t", pt.t},
                {"n_samples", n_samples},
                {"seed", c.seed}};
  try {
    const TransportSums m = transport == "same-cluster"
                                ? TransportSums(transport_same_cluster)
                                : TransportSums(transport_nearest_h);
    const TransportReport rep =
        mode == "exact"
            ? mass_transport_check_exact(spec, pt, m)
            : mass_transport_check_mc(spec, pt, m, n_samples, c.seed,
                                      c.workers);
    EstimateRecord r;
    r.event = "mtp_delta_" + transport;
    r.d = d;
    r.s = s;
    r.L = L;
    r.N = half;
    r.p = pt.p;
    r.q = pt.q;
    r.mean = rep.delta;
    r.se = rep.se;
    r.n = rep.n;
    r.seed = c.seed;
    art.rows.push_back(r);
    art.summary = {{"transport", transport},
                   {"mode", mode},
                   {"lhs", rep.lhs},
                   {"rhs", rep.rhs},
                   {"delta", rep.delta},
                   {"stderr", rep.se},
                   {"n", rep.n}};
    std::optional<std::string> fail;
    if (c.assert_mode) {
      if (transport == "same-cluster") {
        if (rep.delta != 0.0)
          fail = "symmetric transport must balance exactly, delta=" +
                 fmt3(rep.delta);
      } else if (mode == "exact") {
        if (std::fabs(rep.delta) > 1e-12)
          fail = "exact transport imbalance " + fmt3(rep.delta);
      } else if (std::fabs(rep.delta) > 4.0 * rep.se + 1e-15) {
        fail = "delta=" + fmt3(rep.delta) + " exceeds 4 standard errors";
      }
    }
    return finish(art, c,
                  "delta=" + fmt3(rep.delta) + " se=" + fmt3(rep.se) +
                      " mode=" + mode,
                  fail);
  } catch (const std::exception& e) {
    return run_failed("mtp-check", e);
  }
}

using CommandFn = int (*)(ConfigDoc&, Common&);

struct CommandEntry {
  const char* name;
  const char* blurb;
  CommandFn fn;
};

const CommandEntry kCommands[] = {
    {"theta", "origin-to-boundary connection probability", cmd_theta},
    {"one-arm", "radial connection profile and decay rate", cmd_one_arm},
    {"crossing", "face-to-face crossing probability", cmd_crossing},
    {"bisect", "critical q by stochastic bisection", cmd_bisect},
    {"qc-curve", "critical curve q_c(p) over a p grid", cmd_qc_curve},
    {"slab-curve", "slab critical points q_c^N over a thickness grid",
     cmd_slab_curve},
    {"uniqueness", "unique macroscopic spanning cluster frequency",
     cmd_uniqueness},
    {"trifurcations", "trifurcation counts and scaling exponent",
     cmd_trifurcations},
    {"certificate", "subcriticality certificate phi <= 1/2", cmd_certificate},
    {"gm-event", "seed-window events and the conditional boost estimate",
     cmd_gm_event},
    {"renorm", "renormalized site determinations and cluster growth",
     cmd_renorm},
    {"oracle", "exact enumeration on tiny instances", cmd_oracle},
    {"mtp-check", "mass-transport balance on a torus", cmd_mtp_check},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"percolation laboratory batch front end"};
  app.fallthrough();
  app.set_version_flag("--version", std::string(version()));

  Common c;
  auto* opt_config = app.add_option("--config", c.config_path,
                                    "JSON config file (flags override)");
  auto* opt_seed = app.add_option("--seed", c.seed, "master seed");
  auto* opt_workers =
      app.add_option("--workers", c.workers, "worker thread count");
  auto* opt_out = app.add_option("--out", c.out, "output table path");
  auto* opt_format = app.add_option("--format", c.format,
                                    "table format: csv or json");
  app.add_flag("--assert", c.assert_mode,
               "enable the command's acceptance assertion (exit 4 on failure)");

  std::string chosen;
  for (const CommandEntry& e : kCommands) {
    CLI::App* sub = app.add_subcommand(e.name, e.blurb);
    sub->callback([&chosen, name = e.name]() { chosen = name; });
  }
  app.require_subcommand(0, 1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  c.seed_flag = opt_seed->count() > 0;
  c.workers_flag = opt_workers->count() > 0;
  c.out_flag = opt_out->count() > 0;
  c.format_flag = opt_format->count() > 0;

  try {
    ConfigDoc doc;
    if (opt_config->count() > 0) doc = ConfigDoc::load(c.config_path);
    const std::string cfg_command = doc.get_string("command", "");
    if (chosen.empty()) {
      if (cfg_command.empty())
        throw std::invalid_argument(
            "no subcommand given and the config has no command key");
      chosen = cfg_command;
    } else if (!cfg_command.empty() && cfg_command != chosen) {
      throw std::invalid_argument("config key command: \"" + cfg_command +
                                  "\" does not match the invoked subcommand "
                                  "\"" + chosen + "\"");
    }
    resolve_common(doc, c);
    for (const CommandEntry& e : kCommands)
      if (chosen == e.name) return e.fn(doc, c);
    throw std::invalid_argument("config key command: unknown command \"" +
                                chosen + "\"");
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
}
