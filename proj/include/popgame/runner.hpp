#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "popgame/checks.hpp"
#include "popgame/equilibria.hpp"
#include "popgame/integrate.hpp"
#include "popgame/scenario.hpp"

namespace popgame {

namespace fs = std::filesystem;

// Command-line overrides applied on top of a scenario file.
struct RunOptions {
  fs::path out_root = "out";
  std::optional<std::uint64_t> seed;
  std::optional<Method> method;
  std::optional<double> t_end;
  std::optional<double> tol;   // sets rtol; atol follows at tol/100
  std::optional<int> grid;
  bool write_files = true;
};

struct ResolvedRun {
  std::optional<std::uint64_t> seed;  // effective seed, if any source gave one
  std::uint64_t seed_dir = 0;         // directory component (0 when unseeded)
  IntegratorConfig cfg;
  ImitationRule rule;
};

inline ResolvedRun resolve_run(const Scenario& sc, const RunOptions& opts) {
  ResolvedRun rr;
  rr.seed = opts.seed ? opts.seed : sc.seed;
  rr.cfg = sc.integrator;
  if (opts.method) rr.cfg.method = *opts.method;
  if (opts.t_end) rr.cfg.t_end = *opts.t_end;
  if (opts.tol) {
    rr.cfg.rtol = *opts.tol;
    rr.cfg.atol = *opts.tol * 1e-2;
  }
  rr.rule = build_rule(sc, rr.seed);
  rr.seed_dir = rr.seed.value_or(0);
  return rr;
}

namespace detail {

inline fs::path ensure_out_dir(const RunOptions& opts, const Scenario& sc,
                               std::uint64_t seed_dir) {
  fs::path dir = opts.out_root / sc.id / std::to_string(seed_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() +
                        ": " + ec.message());
  return dir;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot open output file: " + p.string());
  return f;
}

inline std::string join_components(const Vec& v, const char* sep = ";") {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += fmt_g(v[i]);
  }
  return s;
}

inline std::string support_string(const Support& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i] + 1);  // actions are 1-based for humans
  }
  return out + "}";
}

inline json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

}  // namespace detail

// Observations written one row per recorded time, 17 significant digits.
// phi/phi_dot are nan for games without an attached potential.
inline void write_trajectory_csv(const fs::path& path, const Trajectory& tr) {
  std::ofstream f = detail::open_out(path);
  f << "t";
  for (int i = 1; i <= tr.m; ++i) f << ",x_" << i;
  f << ",phi,phi_dot\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    f << detail::fmt_g(tr.t[k]);
    for (int i = 0; i < tr.m; ++i) f << "," << detail::fmt_g(tr.x[k][i]);
    const double phi = tr.phi.empty() ? nan : tr.phi[k];
    const double pd = tr.phi_dot.empty()
                          ? (tr.phi_dot_pairwise.empty() ? nan
                                                         : tr.phi_dot_pairwise[k])
                          : tr.phi_dot[k];
    f << "," << detail::fmt_g(phi) << "," << detail::fmt_g(pd) << "\n";
  }
  if (!f) throw IoError("error writing " + path.string());
}

// Best available equilibrium candidates for a game: exact support enumeration
// whenever rewards are affine in x, otherwise (congestion with curved costs)
// the potential maximizer found by projected gradient ascent.
inline std::optional<EquilibriumSet> equilibrium_candidates(const Game& g) {
  if (detail::affine_reward_of(g)) return enumerate_equilibria_linear(g);
  if (g.family() == GameFamily::congestion && g.potential()) {
    AscentResult res = congestion_nash_by_potential(g);
    EquilibriumSet set;
    set.game_digest = g.digest();
    LabeledEquilibrium eq{res.maximizer, restrict_to_support(res.maximizer),
                          is_nash(g, res.maximizer, 1e-6) ? "nash"
                                                          : "critical-non-nash",
                          std::string("stable-candidate"), res.value};
    if (!res.converged)
      set.warnings.push_back(
          "potential ascent stopped before reaching its tolerance "
          "(projected-gradient norm " + detail::fmt_g(res.pg_norm) + ")");
    set.items.push_back(std::move(eq));
    return set;
  }
  return std::nullopt;
}

struct RunResult {
  fs::path dir;  // empty when no files were written
  Trajectory trajectory;
  std::optional<ConvergenceReport> convergence;
  std::optional<LyapunovReport> lyapunov;
  json summary;
};

inline RunResult run_scenario(const Scenario& sc, const RunOptions& opts = {}) {
  if (!sc.initial.point)
    throw ValidationError("scenario " + sc.id +
                          ": run needs a point initial condition; grid "
                          "initials are for sweep");
  const ResolvedRun rr = resolve_run(sc, opts);

  RunResult out;
  out.trajectory = integrate(sc.game, rr.rule, *sc.initial.point, rr.cfg);

  std::optional<EquilibriumSet> eqset = equilibrium_candidates(sc.game);
  if (eqset) {
    try {
      out.convergence =
          detect_convergence(out.trajectory, sc.game, *eqset,
                             rr.cfg.convergence_tol, rr.cfg.convergence_window);
    } catch (const ValidationError&) {
      // no candidate shares the trajectory's support; report honest
      // non-convergence rather than failing the run
    }
  }
  if (sc.game.potential()) out.lyapunov = monitor_lyapunov(out.trajectory);

  json s;
  s["id"] = sc.id;
  s["seed"] = rr.seed ? json(*rr.seed) : json(nullptr);
  s["game"] = sc.game.digest();
  s["rule"] = rr.rule.label;
  s["integrator"] = {{"method", to_string(rr.cfg.method)},
                     {"t_end", rr.cfg.t_end},
                     {"observe_dt", rr.cfg.observe_dt},
                     {"rtol", rr.cfg.rtol},
                     {"atol", rr.cfg.atol},
                     {"step", rr.cfg.step}};
  const bool conv = out.convergence && out.convergence->converged;
  s["converged"] = conv;
  s["t_converged"] = conv ? json(out.convergence->t_converged) : json(nullptr);
  if (out.convergence && out.convergence->limit_index >= 0) {
    const auto& item = eqset->items[out.convergence->limit_index];
    s["limit_point"] = detail::vec_to_json(item.point.vec());
    s["limit_label"] = out.convergence->limit_label;
    s["limit_support"] = detail::support_string(item.support);
  } else {
    s["limit_point"] = nullptr;
    s["limit_label"] = "undetermined";
  }
  s["final_state"] = detail::vec_to_json(out.trajectory.final_state());
  s["final_time"] = out.trajectory.t.back();
  s["min_phi_dot"] =
      out.lyapunov ? json(out.lyapunov->min_phi_dot) : json(nullptr);
  if (out.lyapunov) {
    s["lyapunov"] = {{"monotone_within_slack", out.lyapunov->monotone_within_slack},
                     {"min_increment", out.lyapunov->min_increment},
                     {"max_route_gap", out.lyapunov->max_route_gap},
                     {"slack", out.lyapunov->slack}};
  }
  s["max_projection_correction"] = out.trajectory.max_step_correction;
  s["steps_accepted"] = out.trajectory.steps_accepted;
  s["steps_rejected"] = out.trajectory.steps_rejected;
  out.summary = s;

  if (opts.write_files) {
    out.dir = detail::ensure_out_dir(opts, sc, rr.seed_dir);
    auto wants = [&](const char* what) {
      return std::find(sc.outputs.begin(), sc.outputs.end(), what) !=
             sc.outputs.end();
    };
    if (wants("trajectory-csv"))
      write_trajectory_csv(out.dir / "trajectory.csv", out.trajectory);
    if (wants("summary")) {
      std::ofstream f = detail::open_out(out.dir / "summary.json");
      f << s.dump(2) << "\n";
      if (!f) throw IoError("error writing summary.json");
    }
  }
  return out;
}

struct EquilibriaResult {
  fs::path csv_path;  // empty when no files were written
  EquilibriumSet set;
  std::string table;  // human-readable rendering for stdout
};

inline EquilibriaResult equilibria_scenario(const Scenario& sc,
                                            const RunOptions& opts = {}) {
  std::optional<EquilibriumSet> eqset = equilibrium_candidates(sc.game);
  if (!eqset)
    throw ValidationError("scenario " + sc.id +
                          ": no equilibrium method applies (need affine "
                          "rewards or a congestion potential)");
  EquilibriaResult out;
  out.set = std::move(*eqset);

  // render a fixed-width table
  std::vector<std::array<std::string, 5>> rows;
  rows.push_back({"point", "support", "label", "stability", "potential"});
  for (const auto& it : out.set.items) {
    rows.push_back({"(" + detail::join_components(it.point.vec(), ", ") + ")",
                    detail::support_string(it.support), it.label,
                    it.stability.value_or("-"),
                    it.potential_value ? detail::fmt_g(*it.potential_value)
                                       : "-"});
  }
  std::array<std::size_t, 5> w{};
  for (const auto& r : rows)
    for (int c = 0; c < 5; ++c) w[c] = std::max(w[c], r[c].size());
  std::ostringstream tbl;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (int c = 0; c < 5; ++c) {
      tbl << rows[k][c] << std::string(w[c] - rows[k][c].size(), ' ');
      tbl << (c + 1 < 5 ? "  " : "");
    }
    tbl << "\n";
    if (k == 0) tbl << std::string(w[0] + w[1] + w[2] + w[3] + w[4] + 8, '-')
                    << "\n";
  }
  for (const auto& warn : out.set.warnings) tbl << "note: " << warn << "\n";
  out.table = tbl.str();

  if (opts.write_files) {
    const ResolvedRun rr = resolve_run(sc, opts);
    fs::path dir = detail::ensure_out_dir(opts, sc, rr.seed_dir);
    out.csv_path = dir / "equilibria.csv";
    std::ofstream f = detail::open_out(out.csv_path);
    f << "point,support,label,stability,potential\n";
    for (const auto& it : out.set.items) {
      f << detail::join_components(it.point.vec()) << ","
        << detail::support_string(it.support) << "," << it.label << ","
        << it.stability.value_or("") << ","
        << (it.potential_value ? detail::fmt_g(*it.potential_value) : "")
        << "\n";
    }
    if (!f) throw IoError("error writing " + out.csv_path.string());
  }
  return out;
}

struct SweepResult {
  fs::path csv_path;
  BasinMap map;
  EquilibriumSet set;
  std::map<int, int> counts;  // limit_index (-1 = undetermined) -> cells
};

inline SweepResult sweep_scenario(const Scenario& sc,
                                  const RunOptions& opts = {}) {
  int grid = 0;
  if (opts.grid)
    grid = *opts.grid;
  else if (sc.initial.grid)
    grid = *sc.initial.grid;
  else
    throw ValidationError("scenario " + sc.id +
                          ": sweep needs --grid N or an initial grid spec");
  const ResolvedRun rr = resolve_run(sc, opts);
  std::optional<EquilibriumSet> eqset = equilibrium_candidates(sc.game);
  if (!eqset)
    throw ValidationError("scenario " + sc.id +
                          ": sweep needs an enumerable equilibrium set");

  SweepResult out;
  out.set = std::move(*eqset);
  out.map = basin_probe(sc.game, rr.rule, out.set, grid, rr.cfg);
  for (const auto& cell : out.map.cells) ++out.counts[cell.limit_index];

  if (opts.write_files) {
    fs::path dir = detail::ensure_out_dir(opts, sc, rr.seed_dir);
    out.csv_path = dir / "basin.csv";
    std::ofstream f = detail::open_out(out.csv_path);
    const int m = sc.game.num_actions();
    for (int i = 1; i <= m; ++i) f << "x_" << i << (i < m ? "," : "");
    f << ",limit_index,limit_label,limit_point,final_dist\n";
    for (const auto& cell : out.map.cells) {
      for (int i = 0; i < m; ++i) f << detail::fmt_g(cell.start[i]) << ",";
      if (cell.limit_index >= 0) {
        const auto& item = out.set.items[cell.limit_index];
        f << cell.limit_index << "," << item.label << ","
          << detail::join_components(item.point.vec());
      } else {
        f << "-1,undetermined,";
      }
      f << "," << detail::fmt_g(cell.final_dist) << "\n";
    }
    if (!f) throw IoError("error writing " + out.csv_path.string());
  }
  return out;
}

// ---------------------------------------------------------------------------
// verify: the property suite over one scenario (or a directory of them)

struct CheckResult {
  std::string name;
  bool pass;
  bool expected;  // what the scenario's expect block demands (default true)
  std::string detail;
  bool matches() const { return pass == expected; }
  const char* status() const {
    if (pass) return expected ? "PASS " : "XPASS";
    return expected ? "FAIL " : "XFAIL";
  }
};

struct VerifyReport {
  std::string id;
  std::string source;
  std::vector<CheckResult> checks;
  bool all_as_expected = true;

  std::string render() const {
    std::ostringstream os;
    os << "scenario " << id << " (" << source << ")\n";
    for (const auto& c : checks)
      os << "  " << c.status() << " " << c.name
         << (c.detail.empty() ? "" : " — " + c.detail) << "\n";
    os << "  result: "
       << (all_as_expected ? "OK" : "MISMATCH") << " ("
       << checks.size() << " checks)\n";
    return os.str();
  }
};

inline VerifyReport verify_scenario(const Scenario& sc,
                                    const RunOptions& opts = {}) {
  const ResolvedRun rr = resolve_run(sc, opts);
  VerifyReport rep;
  rep.id = sc.id;
  rep.source = sc.source;

  auto expected = [&](const std::string& name) {
    auto it = sc.expect.find(name);
    return it == sc.expect.end() ? true : it->second;
  };
  auto add = [&](std::string name, bool pass, std::string detail) {
    rep.checks.push_back(
        {name, pass, expected(name), std::move(detail)});
  };

  {  // defining assumption of the dynamics
    ConditionReport r = check_sign_condition(sc.game, rr.rule);
    std::ostringstream d;
    d << r.samples << " samples";
    if (!r.holds && r.witness)
      d << "; witness margin " << detail::fmt_g(r.witness->margin);
    add("sign_condition", r.holds, d.str());
  }
  {  // the stricter classical ordering assumption
    ConditionReport r = check_order_condition(sc.game, rr.rule);
    std::ostringstream d;
    d << r.samples << " samples";
    if (!r.holds && r.witness)
      d << "; witness (i,j,k)=(" << r.witness->i + 1 << ","
        << r.witness->j + 1 << "," << r.witness->k + 1 << ") margin "
        << detail::fmt_g(r.witness->margin);
    add("order_condition", r.holds, d.str());
  }
  {  // reward differences must match potential gradient differences
    std::optional<IdentityReport> r;
    std::string note;
    if (sc.game.potential()) {
      r = verify_potential_identity(sc.game);
    } else if (sc.game.family() == GameFamily::linear) {
      // no closed potential form: test the canonical symmetric-quadratic
      // candidate 0.5 x^T R x, which is the potential iff one exists
      const Mat R = sc.game.reward_matrix();
      const Mat S = 0.5 * (R + R.transpose());
      Potential cand = custom_potential(
          [S](const Vec& x) { return 0.5 * x.dot(S * x); },
          [S](const Vec& x) { return Vec(S * x); });
      r = verify_potential_identity(sc.game, cand);
      note = " (symmetric-quadratic candidate)";
    }
    if (r)
      add("potential_identity", r->holds,
          "max violation " + detail::fmt_g(r->max_violation) + note);
  }

  // trajectory-based checks share one integration
  const Configuration x0 =
      sc.initial.point ? *sc.initial.point : centroid(sc.game.num_actions());
  Trajectory tr = integrate(sc.game, rr.rule, x0, rr.cfg);

  if (sc.game.potential()) {
    LyapunovReport lr = monitor_lyapunov(tr);
    add("lyapunov_monotone", lr.monotone_within_slack,
        "min increment " + detail::fmt_g(lr.min_increment) + ", slack " +
            detail::fmt_g(lr.slack));
    add("phi_dot_routes_agree", lr.max_route_gap <= 1e-12,
        "max gap " + detail::fmt_g(lr.max_route_gap));
    add("phi_dot_nonnegative", lr.min_phi_dot >= -1e-10,
        "min " + detail::fmt_g(lr.min_phi_dot));
  }
  {
    GronwallReport gr = gronwall_positivity_check(tr, sc.game, rr.rule);
    add("gronwall_positivity", gr.holds,
        "min margin " + detail::fmt_g(gr.min_margin));
  }

  std::optional<EquilibriumSet> eqset = equilibrium_candidates(sc.game);
  if (eqset && sc.game.potential()) {
    // unused-best-reply ascent at every boundary-critical rest point
    bool all = true;
    int n = 0;
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& it : eqset->items) {
      if (it.label != "critical-non-nash") continue;
      if (!is_boundary_critical(sc.game, it.point)) continue;
      BorderCheck bc = border_potential_check(sc.game, it.point);
      all = all && bc.holds;
      worst = std::min(worst, bc.min_margin);
      ++n;
    }
    if (n > 0)
      add("border_potential", all,
          std::to_string(n) + " boundary-critical points, min margin " +
              detail::fmt_g(worst));
  }
  if (eqset) {
    std::optional<ConvergenceReport> cr;
    try {
      cr = detect_convergence(tr, sc.game, *eqset, rr.cfg.convergence_tol,
                              rr.cfg.convergence_window);
    } catch (const ValidationError&) {
    }
    const bool conv = cr && cr->converged;
    std::string d = conv ? "to " + cr->limit_label + " at t=" +
                               detail::fmt_g(cr->t_converged)
                         : (cr ? "final distance " +
                                     detail::fmt_g(cr->final_dist)
                               : "no candidate matched the final support");
    add("convergence", conv, d);
  }

  // surface expect keys that no produced check consumed (typo guard)
  for (const auto& [key, want] : sc.expect) {
    bool seen = false;
    for (const auto& c : rep.checks) seen = seen || c.name == key;
    if (!seen)
      rep.checks.push_back({key, false, want,
                            "expectation names no applicable check"});
  }

  for (const auto& c : rep.checks)
    rep.all_as_expected = rep.all_as_expected && c.matches();

  if (opts.write_files) {
    fs::path dir = detail::ensure_out_dir(opts, sc, rr.seed_dir);
    json j;
    j["id"] = sc.id;
    j["all_as_expected"] = rep.all_as_expected;
    j["checks"] = json::array();
    for (const auto& c : rep.checks)
      j["checks"].push_back({{"name", c.name},
                             {"pass", c.pass},
                             {"expected", c.expected},
                             {"detail", c.detail}});
    std::ofstream f = detail::open_out(dir / "verify.json");
    f << j.dump(2) << "\n";
    if (!f) throw IoError("error writing verify.json");
  }
  return rep;
}

// Runs the property suite on every *.json scenario under `dir`, fanning out
// across worker threads; reports come back in filename order.
inline std::vector<VerifyReport> verify_all(const fs::path& dir,
                                            const RunOptions& opts = {}) {
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  if (ec) throw IoError("cannot list scenario directory " + dir.string() +
                        ": " + ec.message());
  if (files.empty())
    throw ValidationError("no scenario files found in " + dir.string());
  std::sort(files.begin(), files.end());

  std::vector<VerifyReport> reports(files.size());
  parallel_for(static_cast<int>(files.size()), [&](int i) {
    Scenario sc = load_scenario(files[i].string());
    reports[i] = verify_scenario(sc, opts);
  });
  return reports;
}

}  // namespace popgame
