#pragma once

#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "popgame/dynamics.hpp"
#include "popgame/equilibria.hpp"
#include "popgame/game.hpp"
#include "popgame/types.hpp"

namespace popgame {

enum class Method { rk45_adaptive, rk4_fixed };

inline const char* to_string(Method m) {
  return m == Method::rk45_adaptive ? "rk45-adaptive" : "rk4-fixed";
}

struct IntegratorConfig {
  Method method = Method::rk45_adaptive;
  double rtol = 1e-8;   // adaptive: relative tolerance
  double atol = 1e-10;  // adaptive: absolute tolerance
  double step = 1e-2;   // fixed: nominal step size
  double t_end = 30.0;
  double observe_dt = 0.1;  // recording interval, independent of step size
  double projection_tol = 1e-9;  // how negative a share may go before erroring
  double convergence_tol = 1e-4;
  double convergence_window = 1.0;
  bool stop_at_rest = false;   // stop early once the field vanishes
  double rest_tol = 1e-12;

  // Basis for monitor slacks: local error target of the scheme in use.
  double tolerance_scale() const {
    return method == Method::rk45_adaptive ? std::max(rtol, atol)
                                           : std::pow(step, 4);
  }
};

struct TrajectoryEvent {
  double t;
  std::string kind;  // "converged" | "projection-applied" | "step-rejected"
  std::string detail;
};

struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> x;
  // Potential diagnostics at the recorded states. phi/phi_dot (gradient
  // route) are empty when the game has no attached potential; the pairwise
  // route needs only rewards and rates and is always recorded.
  std::vector<double> phi;
  std::vector<double> phi_dot;
  std::vector<double> phi_dot_pairwise;
  std::vector<TrajectoryEvent> events;
  long steps_accepted = 0;
  long steps_rejected = 0;
  double max_step_correction = 0.0;  // largest single-step projection fix
  double monitor_slack = 0.0;        // 10x integrator tolerance
  int m = 0;

  const Vec& final_state() const { return x.back(); }
  double final_time() const { return t.back(); }
};

namespace detail {

struct Dp45 {
  // Dormand–Prince 5(4) tableau.
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                          a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                          a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 35.0 / 384 - 5179.0 / 57600;
  static constexpr double e3 = 500.0 / 1113 - 7571.0 / 16695;
  static constexpr double e4 = 125.0 / 192 - 393.0 / 640;
  static constexpr double e5 = -2187.0 / 6784 + 92097.0 / 339200;
  static constexpr double e6 = 11.0 / 84 - 187.0 / 2100;
  static constexpr double e7 = -1.0 / 40;
};

class SimplexStepper {
 public:
  SimplexStepper(const Game& g, const ImitationRule& rule,
                 const IntegratorConfig& cfg, Trajectory& out)
      : game_(g), rule_(rule), cfg_(cfg), out_(out) {}

  Vec field(const Vec& x) const { return vector_field_raw(game_, rule_, x); }

  // Clamp-and-renormalize projection applied after every accepted step.
  // Shares in [-projection_tol, 0) are round-off and get clamped; anything
  // more negative means the step left the simplex for real.
  void project(Vec& x, double t) {
    double clamped = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] < -cfg_.projection_tol)
        throw IntegrationError("integrate: share " + std::to_string(i) +
                               " fell to " + std::to_string(x[i]) + " at t=" +
                               std::to_string(t) +
                               " (beyond the projection tolerance)");
      if (x[i] < 0.0) {
        clamped += -x[i];
        x[i] = 0.0;
      }
    }
    const double s = x.sum();
    if (!(s > 0.0)) throw IntegrationError("integrate: state mass vanished");
    const double correction = clamped + std::abs(s - 1.0);
    x /= s;
    if (correction > out_.max_step_correction)
      out_.max_step_correction = correction;
    if (clamped > 0.0)
      out_.events.push_back({t, "projection-applied",
                             "clamped mass " + std::to_string(clamped)});
  }

  void record(double t, const Vec& x) {
    out_.t.push_back(t);
    out_.x.push_back(x);
    if (game_.potential()) {
      const Potential& pot = *game_.potential();
      out_.phi.push_back(pot.value(x));
      out_.phi_dot.push_back(pot.gradient(x).dot(field(x)));
    }
    out_.phi_dot_pairwise.push_back(phi_dot_pairwise(game_, rule_, x));
  }

  // True (and records the event once) when the current field value says the
  // state is a numerical rest point.
  bool note_rest(const Vec& field_at_x, double t) {
    if (rest_seen_) return true;
    if (field_at_x.lpNorm<Eigen::Infinity>() > cfg_.rest_tol) return false;
    rest_seen_ = true;
    out_.events.push_back({t, "converged", "vector field below rest tolerance"});
    return true;
  }

 private:
  const Game& game_;
  const ImitationRule& rule_;
  const IntegratorConfig& cfg_;
  Trajectory& out_;
  bool rest_seen_ = false;
};

inline std::vector<double> observation_times(const IntegratorConfig& cfg) {
  std::vector<double> obs{0.0};
  for (long i = 1; static_cast<double>(i) * cfg.observe_dt <
                   cfg.t_end - 1e-12 * std::max(1.0, cfg.t_end);
       ++i)
    obs.push_back(static_cast<double>(i) * cfg.observe_dt);
  obs.push_back(cfg.t_end);
  return obs;
}

}  // namespace detail

// Integrates the imitation dynamics from x0 to t_end, recording the state at
// every observation time. The adaptive scheme is Dormand–Prince 5(4) with
// internal steps clipped to land exactly on observation times, so recorded
// states are genuine accepted states (no interpolation) and monitor slacks
// stay honest. The fixed scheme is classic RK4 taking round(gap/step) equal
// steps per observation interval, which makes repeat runs byte-identical.
inline Trajectory integrate(const Game& game, const ImitationRule& rule,
                            const Configuration& x0,
                            const IntegratorConfig& cfg = {}) {
  if (x0.size() != game.num_actions())
    throw ValidationError("integrate: initial condition has wrong dimension");
  if (!rule.rates) throw ValidationError("integrate: rule has no evaluator");
  if (!(cfg.t_end > 0.0)) throw ValidationError("integrate: t_end must be positive");
  if (!(cfg.observe_dt > 0.0))
    throw ValidationError("integrate: observe_dt must be positive");
  if (cfg.method == Method::rk45_adaptive && !(cfg.rtol > 0.0 && cfg.atol > 0.0))
    throw ValidationError("integrate: tolerances must be positive");
  if (cfg.method == Method::rk4_fixed && !(cfg.step > 0.0))
    throw ValidationError("integrate: step must be positive");

  Trajectory out;
  out.m = game.num_actions();
  out.monitor_slack = 10.0 * cfg.tolerance_scale();
  detail::SimplexStepper st(game, rule, cfg, out);

  const std::vector<double> obs = detail::observation_times(cfg);
  Vec x = x0.vec();
  double t = 0.0;
  st.record(0.0, x);

  if (cfg.method == Method::rk4_fixed) {
    for (std::size_t oi = 1; oi < obs.size(); ++oi) {
      const double gap = obs[oi] - t;
      const long n = std::max(1l, std::lround(gap / cfg.step));
      const double h = gap / static_cast<double>(n);
      for (long s = 0; s < n; ++s) {
        const Vec k1 = st.field(x);
        if (st.note_rest(k1, t) && cfg.stop_at_rest) {
          if (out.t.back() < t) st.record(t, x);
          return out;
        }
        const Vec k2 = st.field(x + 0.5 * h * k1);
        const Vec k3 = st.field(x + 0.5 * h * k2);
        const Vec k4 = st.field(x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
        st.project(x, t);
        ++out.steps_accepted;
      }
      t = obs[oi];
      st.record(t, x);
    }
    return out;
  }

  using detail::Dp45;
  double h = std::min(cfg.observe_dt, cfg.t_end) / 8.0;
  for (std::size_t oi = 1; oi < obs.size();) {
    const double target = obs[oi];
    const Vec k1 = st.field(x);
    if (st.note_rest(k1, t) && cfg.stop_at_rest) {
      if (out.t.back() < t) st.record(t, x);
      return out;
    }
    const double gap = target - t;
    const bool clipped = h >= gap;
    const double hs = clipped ? gap : h;
    if (hs < 1e-14 * std::max(1.0, std::abs(t)))
      throw IntegrationError("integrate: step size underflow at t=" +
                             std::to_string(t));

    const Vec k2 = st.field(x + hs * (Dp45::a21 * k1));
    const Vec k3 = st.field(x + hs * (Dp45::a31 * k1 + Dp45::a32 * k2));
    const Vec k4 =
        st.field(x + hs * (Dp45::a41 * k1 + Dp45::a42 * k2 + Dp45::a43 * k3));
    const Vec k5 = st.field(x + hs * (Dp45::a51 * k1 + Dp45::a52 * k2 +
                                      Dp45::a53 * k3 + Dp45::a54 * k4));
    const Vec k6 =
        st.field(x + hs * (Dp45::a61 * k1 + Dp45::a62 * k2 + Dp45::a63 * k3 +
                           Dp45::a64 * k4 + Dp45::a65 * k5));
    Vec y5 = x + hs * (Dp45::b1 * k1 + Dp45::b3 * k3 + Dp45::b4 * k4 +
                       Dp45::b5 * k5 + Dp45::b6 * k6);
    const Vec k7 = st.field(y5);
    const Vec err_v = hs * (Dp45::e1 * k1 + Dp45::e3 * k3 + Dp45::e4 * k4 +
                            Dp45::e5 * k5 + Dp45::e6 * k6 + Dp45::e7 * k7);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double sc =
          cfg.atol + cfg.rtol * std::max(std::abs(x[i]), std::abs(y5[i]));
      const double q = err_v[i] / sc;
      acc += q * q;
    }
    const double err = std::sqrt(acc / static_cast<double>(x.size()));

    if (err <= 1.0) {
      t = clipped ? target : t + hs;
      st.project(y5, t);
      x = y5;
      ++out.steps_accepted;
      if (clipped) {
        st.record(target, x);
        ++oi;
        // keep the controller's h: the clip says nothing about accuracy
      } else {
        const double fac =
            err < 1e-10 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(err, -0.2)));
        h = hs * fac;
      }
    } else {
      ++out.steps_rejected;
      out.events.push_back({t, "step-rejected", "error " + std::to_string(err)});
      h = hs * std::max(0.1, 0.9 * std::pow(err, -0.2));
    }
  }
  return out;
}

struct LyapunovReport {
  bool monotone_within_slack;
  double min_increment;  // most negative step-to-step potential change
  double min_phi_dot;    // most negative recorded gradient-route derivative
  double max_route_gap;  // worst disagreement between the two routes
  double slack;
};

// Checks the Lyapunov property along a recorded trajectory: the potential
// must not decrease beyond the integrator slack, and the two derivative
// routes must agree.
inline LyapunovReport monitor_lyapunov(const Trajectory& tr) {
  if (tr.phi.empty())
    throw ValidationError("monitor_lyapunov: trajectory carries no potential samples");
  LyapunovReport rep{true, 0.0, tr.phi_dot.front(), 0.0, tr.monitor_slack};
  for (std::size_t k = 0; k + 1 < tr.phi.size(); ++k)
    rep.min_increment = std::min(rep.min_increment, tr.phi[k + 1] - tr.phi[k]);
  for (std::size_t k = 0; k < tr.phi_dot.size(); ++k) {
    rep.min_phi_dot = std::min(rep.min_phi_dot, tr.phi_dot[k]);
    rep.max_route_gap = std::max(
        rep.max_route_gap, std::abs(tr.phi_dot[k] - tr.phi_dot_pairwise[k]));
  }
  rep.monotone_within_slack = rep.min_increment >= -rep.slack;
  return rep;
}

struct ConvergenceReport {
  bool converged;
  double t_converged;  // earliest time after which the distance stays below tol
  int limit_index;     // index into the equilibrium set, -1 if undetermined
  std::string limit_label;  // "nash" | "restricted-nash" | "undetermined"
  double final_dist;
};

// Decides convergence of a trajectory toward the restricted-Nash equilibria
// of the sub-game on the initial support: the distance to the candidate set
// must stay below tol for the entire trailing window.
inline ConvergenceReport detect_convergence(const Trajectory& tr,
                                            const Game& game,
                                            const EquilibriumSet& eq,
                                            double tol = 1e-4,
                                            double window = 1.0) {
  if (eq.game_digest != game.digest())
    throw ValidationError(
        "detect_convergence: equilibrium set belongs to a different game (" +
        eq.game_digest + " vs " + game.digest() + ")");
  if (tr.x.empty()) throw ValidationError("detect_convergence: empty trajectory");

  const Configuration start(tr.x.front());
  const Support S = restrict_to_support(start, kSupportTol);
  std::vector<int> cand;
  for (int i = 0; i < static_cast<int>(eq.items.size()); ++i) {
    const auto& it = eq.items[i];
    bool inside = true;
    for (int a : it.support)
      if (!support_contains(S, a)) inside = false;
    // the tolerance here only screens candidates; numerically found points
    // (e.g. ascent maximizers) carry ~1e-9 reward spread, so stay well above
    if (inside && is_restricted_nash(game, it.point, S, 1e-7)) cand.push_back(i);
  }
  if (cand.empty())
    throw ValidationError(
        "detect_convergence: equilibrium set has no restricted-Nash member "
        "for the trajectory's initial support");

  const std::size_t n = tr.x.size();
  std::vector<double> dist(n);
  std::vector<int> nearest(n);
  for (std::size_t k = 0; k < n; ++k) {
    double best = std::numeric_limits<double>::infinity();
    int bi = -1;
    for (int ci : cand) {
      const double d = (tr.x[k] - eq.items[ci].point.vec()).norm();
      if (d < best) {
        best = d;
        bi = ci;
      }
    }
    dist[k] = best;
    nearest[k] = bi;
  }

  ConvergenceReport rep{false, std::numeric_limits<double>::quiet_NaN(), -1,
                        "undetermined", dist.back()};
  const double t_last = tr.t.back();
  if (t_last < window) return rep;  // too short to certify a full window
  bool window_ok = true;
  for (std::size_t k = 0; k < n; ++k)
    if (tr.t[k] >= t_last - window && dist[k] >= tol) window_ok = false;
  if (!window_ok) return rep;

  std::size_t j = n;  // earliest index from which the distance stays below tol
  while (j > 0 && dist[j - 1] < tol) --j;
  rep.converged = true;
  rep.t_converged = tr.t[j];
  rep.limit_index = nearest.back();
  rep.limit_label = is_nash(game, eq.items[rep.limit_index].point, 1e-7)
                        ? "nash"
                        : "restricted-nash";
  return rep;
}

struct GronwallReport {
  bool holds;
  double min_margin;  // min over samples of x_i(t) - (x_i(0) e^{-C_i t} - slack)
  Vec rate_bound;     // the per-action decay constants C_i used
};

// Initially-used actions keep positive mass, quantitatively:
// x_i(t) >= x_i(0) exp(-C_i t). For the replicator rule C_i uses the exact
// reward bound m * max|r_i|; for other rules the pairwise rate spread is
// bounded by seeded sampling. Slack absorbs integration error.
inline GronwallReport gronwall_positivity_check(const Trajectory& tr,
                                                const Game& game,
                                                const ImitationRule& rule,
                                                double slack = 1e-6,
                                                std::uint64_t seed = 0x9e0ff1ceULL) {
  const int m = game.num_actions();
  Vec C(m);
  if (rule.kind == RuleKind::replicator && game.family() == GameFamily::linear) {
    // max over the simplex of |(Rx)_i| is attained at a vertex
    C = static_cast<double>(m) *
        game.reward_matrix().array().abs().rowwise().maxCoeff().matrix();
  } else {
    Rng rng(seed);
    C.setZero();
    for (int s = 0; s < 512; ++s) {
      const Vec xs = dirichlet_uniform(rng, m);
      const Vec r = game.rewards(xs);
      if (rule.kind == RuleKind::replicator) {
        for (int i = 0; i < m; ++i) C[i] = std::max(C[i], std::abs(r[i]));
      } else {
        const Mat f = rule.rates(xs, r);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j)
            C[i] = std::max(C[i], std::abs(f(i, j) - f(j, i)));
      }
    }
    C *= static_cast<double>(m);
  }

  GronwallReport rep{true, std::numeric_limits<double>::infinity(), C};
  const Vec& x0 = tr.x.front();
  for (std::size_t k = 0; k < tr.x.size(); ++k)
    for (int i = 0; i < m; ++i) {
      if (x0[i] <= kSupportTol) continue;
      const double bound = x0[i] * std::exp(-C[i] * tr.t[k]) - slack;
      rep.min_margin = std::min(rep.min_margin, tr.x[k][i] - bound);
    }
  rep.holds = rep.min_margin >= 0.0;
  return rep;
}

// Runs `body(i)` for i in [0, n) on all available cores. Used for
// embarrassingly parallel fan-outs (basin grids, scenario batches); results
// must be written to disjoint slots so merging stays deterministic.
inline void parallel_for(int n, const std::function<void(int)>& body) {
  const int hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = std::min(hw, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct BasinCell {
  Vec start;
  int limit_index;  // index into the equilibrium set, -1 if undetermined
  double final_dist;
};

struct BasinMap {
  std::vector<BasinCell> cells;
  int grid_n;
  std::string game_digest;
};

// Integrates every point of a barycentric grid and assigns it the nearest
// equilibrium within convergence_tol of the final state (-1 when the budget
// ran out before any equilibrium was approached). Only sensible to draw for
// two or three actions.
inline BasinMap basin_probe(const Game& game, const ImitationRule& rule,
                            const EquilibriumSet& eq, int grid_n,
                            const IntegratorConfig& cfg = {}) {
  const int m = game.num_actions();
  if (m != 2 && m != 3)
    throw ValidationError("basin_probe: grids are drawn for m = 2 or 3 only");
  if (grid_n < 2) throw ValidationError("basin_probe: grid_n must be at least 2");
  if (eq.game_digest != game.digest())
    throw ValidationError("basin_probe: equilibrium set belongs to a different game");
  if (eq.items.empty())
    throw ValidationError("basin_probe: empty equilibrium set");

  std::vector<Vec> starts;
  const double den = static_cast<double>(grid_n - 1);
  if (m == 2) {
    for (int i = 0; i < grid_n; ++i) {
      Vec v(2);
      v << static_cast<double>(i) / den, 1.0 - static_cast<double>(i) / den;
      starts.push_back(v);
    }
  } else {
    for (int i = 0; i < grid_n; ++i)
      for (int j = 0; i + j < grid_n; ++j) {
        Vec v(3);
        v << static_cast<double>(i) / den, static_cast<double>(j) / den,
            static_cast<double>(grid_n - 1 - i - j) / den;
        starts.push_back(v);
      }
  }

  BasinMap map;
  map.grid_n = grid_n;
  map.game_digest = eq.game_digest;
  map.cells.resize(starts.size());
  parallel_for(static_cast<int>(starts.size()), [&](int idx) {
    const Trajectory tr = integrate(game, rule, Configuration(starts[idx]), cfg);
    double best = std::numeric_limits<double>::infinity();
    int bi = -1;
    for (int e = 0; e < static_cast<int>(eq.items.size()); ++e) {
      const double d = (tr.final_state() - eq.items[e].point.vec()).norm();
      if (d < best) {
        best = d;
        bi = e;
      }
    }
    map.cells[idx] = {starts[idx], best <= cfg.convergence_tol ? bi : -1, best};
  });
  return map;
}

}  // namespace popgame
