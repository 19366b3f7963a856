#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "popgame/configuration.hpp"
#include "popgame/game.hpp"
#include "popgame/potential.hpp"
#include "popgame/random.hpp"
#include "popgame/types.hpp"

namespace popgame {

// Mass below this threshold counts as "not using the action" in the
// membership predicates and when reading off a point's support.
constexpr double kSupportTol = 1e-9;

// Nash: every used action earns within tol of the best reward.
inline bool is_nash(const Game& g, const Configuration& x, double tol = 1e-9) {
  const Vec r = g.rewards(x);
  const double rmax = r.maxCoeff();
  for (int i = 0; i < x.size(); ++i)
    if (x[i] > kSupportTol && r[i] < rmax - tol) return false;
  return true;
}

namespace detail {
inline void validate_support(const Support& s, int m) {
  if (s.empty()) throw ValidationError("support: must be nonempty");
  int prev = -1;
  for (int i : s) {
    if (i <= prev) throw ValidationError("support: indices must be sorted and unique");
    if (i < 0 || i >= m) throw ValidationError("support: index out of range");
    prev = i;
  }
}
}  // namespace detail

// Nash equilibrium of the sub-game restricted to action set S: the point
// lies on the face X_S and every used action earns within tol of the best
// reward available *inside S*.
inline bool is_restricted_nash(const Game& g, const Configuration& x,
                               const Support& S, double tol = 1e-9) {
  detail::validate_support(S, g.num_actions());
  for (int i = 0; i < x.size(); ++i)
    if (x[i] > kSupportTol && !support_contains(S, i)) return false;
  const Vec r = g.rewards(x);
  double rmax_s = r[S.front()];
  for (int j : S) rmax_s = std::max(rmax_s, r[j]);
  for (int i : S)
    if (x[i] > kSupportTol && r[i] < rmax_s - tol) return false;
  return true;
}

// Critical configuration: every used action earns the population average.
// Equivalent to membership in some restricted-Nash set.
inline bool is_critical(const Game& g, const Configuration& x,
                        double tol = 1e-9) {
  const Vec r = g.rewards(x);
  const double rbar = x.vec().dot(r);
  for (int i = 0; i < x.size(); ++i)
    if (x[i] > kSupportTol && std::abs(r[i] - rbar) > tol) return false;
  return true;
}

// Critical but not Nash: some unused action strictly beats the average.
inline bool is_boundary_critical(const Game& g, const Configuration& x,
                                 double tol = 1e-9) {
  if (!is_critical(g, x, tol)) return false;
  const Vec r = g.rewards(x);
  const double rbar = x.vec().dot(r);
  return r.maxCoeff() > rbar + tol;
}

struct LabeledEquilibrium {
  Configuration point;
  Support support;    // actions actually carrying mass
  std::string label;  // "nash" | "critical-non-nash"
  std::optional<std::string> stability;  // "stable-candidate"|"unstable"|"saddle"
  std::optional<double> potential_value;
};

struct EquilibriumSet {
  std::vector<LabeledEquilibrium> items;
  std::string game_digest;
  std::vector<std::string> warnings;  // e.g. supports with solution continua
};

namespace detail {

// Rewards in the form r(x) = M x + c, available for linear games and for
// congestion games whose costs are all affine.
struct AffineReward {
  Mat M;
  Vec c;
};

inline std::optional<AffineReward> affine_reward_of(const Game& g) {
  if (g.family() == GameFamily::linear)
    return AffineReward{g.reward_matrix(), Vec::Zero(g.num_actions())};
  if (g.family() == GameFamily::congestion) {
    const auto& costs = g.costs();
    const Mat& A = g.incidence();
    Vec slope(A.rows()), icept(A.rows());
    for (Eigen::Index k = 0; k < A.rows(); ++k) {
      if (!costs[k].affine) return std::nullopt;
      slope[k] = costs[k].affine->first;
      icept[k] = costs[k].affine->second;
    }
    return AffineReward{A.transpose() * slope.asDiagonal() * A,
                        A.transpose() * icept};
  }
  return std::nullopt;
}

// Potential-landscape classification of a rest point: sample feasible
// neighbor directions, plus directions inside the point's own face, and
// look at the sign pattern of the potential change.
inline std::string stability_hint(const Game& g, const Potential& pot,
                                  const Configuration& point, double tol) {
  if (is_boundary_critical(g, point, tol)) return "unstable";
  const Vec p = point.vec();
  const int m = static_cast<int>(p.size());
  const double phi0 = pot.value(p);
  std::vector<int> supp;
  for (int i = 0; i < m; ++i)
    if (p[i] > kSupportTol) supp.push_back(i);

  Rng rng(sub_seed(0x57ab111e, static_cast<std::uint64_t>(m)));
  auto gauss = [&rng]() {
    return std::sqrt(-2.0 * std::log(rng.uniform_pos())) *
           std::cos(2.0 * M_PI * rng.uniform_pos());
  };

  int n_hi = 0, n_lo = 0;
  const double radius = 1e-2, flat_tol = 1e-10;
  auto probe = [&](bool face_only) {
    Vec t = Vec::Zero(m);
    if (face_only) {
      double mean = 0.0;
      for (int i : supp) {
        t[i] = gauss();
        mean += t[i];
      }
      mean /= static_cast<double>(supp.size());
      for (int i : supp) t[i] -= mean;
    } else {
      for (int i = 0; i < m; ++i) t[i] = gauss();
      for (int i = 0; i < m; ++i)
        if (p[i] <= kSupportTol) t[i] = std::abs(t[i]);  // zero shares may only grow
      // rebalance over the used actions so the direction stays in the simplex
      const double total = t.sum();
      for (int i : supp) t[i] -= total / static_cast<double>(supp.size());
    }
    const double tn = t.norm();
    if (tn < 1e-12) return;
    t /= tn;
    // largest step keeping used shares nonnegative
    double cap = 1.0;
    for (int i : supp)
      if (t[i] < 0.0) cap = std::min(cap, p[i] / -t[i]);
    const double s = std::min(radius, 0.45 * cap);
    if (s <= 0.0) return;
    const double d = pot.value(p + s * t) - phi0;
    if (d > flat_tol) ++n_hi;
    if (d < -flat_tol) ++n_lo;
  };

  for (int n = 0; n < 256; ++n) probe(false);
  if (supp.size() >= 2 && static_cast<int>(supp.size()) < m)
    for (int n = 0; n < 256; ++n) probe(true);

  if (n_hi == 0) return "stable-candidate";  // (weak) local max
  if (n_lo == 0) return "unstable";          // (weak) local min
  return "saddle";
}

}  // namespace detail

// Enumerates the critical configurations of a game with affine rewards
// r(x) = Mx + c (every linear game; congestion games with affine costs) by
// walking all nonempty supports, solving the equal-reward system on each,
// and keeping nonnegative solutions. Supports whose system is consistent
// but rank-deficient carry a continuum of critical points; these are
// recorded as warnings and skipped. Only practical for m <= 6.
inline EquilibriumSet enumerate_equilibria_linear(const Game& g,
                                                  double tol = 1e-9) {
  const int m = g.num_actions();
  if (m > 6)
    throw ValidationError(
        "enumerate_equilibria_linear: support enumeration is limited to m <= 6");
  const auto aff = detail::affine_reward_of(g);
  if (!aff)
    throw ValidationError(
        "enumerate_equilibria_linear: rewards must be affine (linear game or "
        "congestion game with affine costs)");
  const Mat& M = aff->M;
  const Vec& c = aff->c;

  EquilibriumSet out;
  out.game_digest = g.digest();

  std::vector<Vec> points;
  for (unsigned mask = 1; mask < (1u << m); ++mask) {
    std::vector<int> S;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) S.push_back(i);
    const int k = static_cast<int>(S.size());

    Vec x = Vec::Zero(m);
    if (k == 1) {
      x[S[0]] = 1.0;
      points.push_back(x);
      continue;
    }

    // equal rewards across S, shares summing to one
    Mat B(k, k);
    Vec d(k);
    for (int r = 0; r + 1 < k; ++r) {
      for (int s = 0; s < k; ++s) B(r, s) = M(S[r + 1], S[s]) - M(S[0], S[s]);
      d[r] = c[S[0]] - c[S[r + 1]];
    }
    B.row(k - 1).setOnes();
    d[k - 1] = 1.0;

    Eigen::FullPivLU<Mat> lu(B);
    lu.setThreshold(1e-10);
    if (lu.rank() < k) {
      Mat aug(k, k + 1);
      aug.leftCols(k) = B;
      aug.col(k) = d;
      Eigen::FullPivLU<Mat> lu_aug(aug);
      lu_aug.setThreshold(1e-10);
      if (lu_aug.rank() == lu.rank()) {
        std::string w = "support {";
        for (int s = 0; s < k; ++s)
          w += (s ? "," : "") + std::to_string(S[s] + 1);
        w += "}: continuum of critical points, skipped";
        out.warnings.push_back(w);
      }
      continue;  // inconsistent systems simply have no solution
    }
    const Vec y = lu.solve(d);
    bool ok = true;
    for (int s = 0; s < k; ++s)
      if (y[s] < -Configuration::kNegClamp) ok = false;
    if (!ok) continue;
    for (int s = 0; s < k; ++s) x[S[s]] = std::max(y[s], 0.0);
    points.push_back(x);
  }

  for (const Vec& p : points) {
    bool dup = false;
    for (const auto& it : out.items)
      if ((it.point.vec() - p).norm() <= 1e-9) {
        dup = true;
        break;
      }
    if (dup) continue;
    Configuration cf(p);
    LabeledEquilibrium e{cf, restrict_to_support(cf, kSupportTol),
                         is_nash(g, cf, tol) ? "nash" : "critical-non-nash",
                         std::nullopt, std::nullopt};
    if (g.potential()) {
      e.potential_value = potential_eval(*g.potential(), cf);
      e.stability = detail::stability_hint(g, *g.potential(), cf, tol);
    }
    out.items.push_back(std::move(e));
  }
  return out;
}

struct SetDistance {
  double dist;
  int index;  // position in EquilibriumSet.items
};

// Euclidean distance to the nearest set member, optionally restricted to a
// label and/or to members supported inside a given action subset.
inline SetDistance distance_to_set(
    const Configuration& x, const EquilibriumSet& set,
    const std::optional<std::string>& label_filter = std::nullopt,
    const std::optional<Support>& support_filter = std::nullopt) {
  SetDistance best{0.0, -1};
  for (int i = 0; i < static_cast<int>(set.items.size()); ++i) {
    const auto& it = set.items[i];
    if (label_filter && it.label != *label_filter) continue;
    if (support_filter) {
      bool inside = true;
      for (int a : it.support)
        if (!support_contains(*support_filter, a)) inside = false;
      if (!inside) continue;
    }
    const double d = (it.point.vec() - x.vec()).norm();
    if (best.index < 0 || d < best.dist) best = {d, i};
  }
  if (best.index < 0)
    throw ValidationError("distance_to_set: no members match the filter");
  return best;
}

struct AscentResult {
  Configuration maximizer;
  double value;
  int iterations;
  bool converged;
  double pg_norm;  // norm of the unit-step projected gradient at the result
};

// Maximizes the concave congestion potential over the simplex by projected
// gradient ascent with a backtracking (Armijo) line search on the projection
// arc. The maximizer of the potential is the game's Nash equilibrium.
inline AscentResult congestion_nash_by_potential(
    const Game& g, std::optional<Configuration> start = std::nullopt,
    int max_iters = 100000, double pg_tol = 1e-10) {
  if (g.family() != GameFamily::congestion)
    throw ValidationError("congestion_nash_by_potential: congestion game required");
  // decreasing costs are what make the potential concave; probe a grid
  for (const auto& cst : g.costs()) {
    for (int i = 0; i < 16; ++i) {
      const double y0 = i / 16.0, y1 = (i + 1) / 16.0;
      if (!(cst.psi(y1) < cst.psi(y0)))
        throw ValidationError(
            "congestion_nash_by_potential: non-decreasing cost detected (" +
            cst.label + ")");
    }
  }
  const Potential pot =
      (g.potential() && g.potential()->form == PotentialForm::congestion)
          ? *g.potential()
          : congestion_potential(g.incidence(), g.costs());

  Vec x = start ? start->vec() : Vec::Constant(g.num_actions(), 1.0 / g.num_actions());
  double phi = pot.value(x);
  int it = 0;
  bool converged = false;
  double pgn = 0.0;
  for (; it < max_iters; ++it) {
    const Vec grad = pot.gradient(x);
    const Vec pg = project_to_simplex(x + grad) - x;
    pgn = pg.norm();
    if (pgn <= pg_tol) {
      converged = true;
      break;
    }
    double s = 1.0;
    bool stepped = false;
    while (s >= 1e-16) {
      const Vec xs = project_to_simplex(x + s * grad);
      const double incr = grad.dot(xs - x);
      const double phis = pot.value(xs);
      if (phis >= phi + 1e-4 * incr && phis > phi) {
        x = xs;
        phi = phis;
        stepped = true;
        break;
      }
      s *= 0.5;
    }
    if (!stepped) {
      // the line search is float-limited: the potential no longer improves
      // at any step length. Accept the point if the projected gradient is
      // already far below the accuracy the maximizer is used at.
      converged = pgn <= 1e-7;
      break;
    }
  }
  return AscentResult{Configuration(x), phi, it, converged, pgn};
}

struct BorderCheck {
  bool holds;
  double min_margin;  // min over samples of Phi(sample) - Phi(xbar)
  int samples;
  Vec worst_point;
};

// Property behind the border instability argument: near a boundary-critical
// point, shifting any small amount of mass onto the unused best-reply
// actions strictly increases the potential. Samples x = (1-ta) xbar + ta u
// with u a random mixture over the maximizing actions, a in (0, eps/2],
// t in (0, 1]; every sample stays within eps of xbar.
inline BorderCheck border_potential_check(const Game& g,
                                          const Configuration& xbar,
                                          double eps = 0.05,
                                          int n_samples = 200,
                                          std::uint64_t seed = 0x0b0bcafeULL,
                                          double tol = 1e-9) {
  if (!g.potential())
    throw ValidationError("border_potential_check: game has no attached potential");
  if (!(eps > 0.0))
    throw ValidationError("border_potential_check: eps must be positive");
  if (!is_boundary_critical(g, xbar, tol))
    throw ValidationError("border_potential_check: point is not boundary-critical");

  const Vec r = g.rewards(xbar);
  const double rstar = r.maxCoeff();
  std::vector<int> best;
  for (int i = 0; i < xbar.size(); ++i)
    if (r[i] >= rstar - tol) best.push_back(i);

  const Potential& pot = *g.potential();
  const double phi0 = pot.value(xbar.vec());
  Rng rng(seed);
  BorderCheck out{true, 0.0, n_samples, xbar.vec()};
  bool first = true;
  for (int n = 0; n < n_samples; ++n) {
    Vec u = Vec::Zero(xbar.size());
    if (best.size() == 1) {
      u[best[0]] = 1.0;
    } else {
      const Vec w = dirichlet_uniform(rng, static_cast<int>(best.size()));
      for (std::size_t b = 0; b < best.size(); ++b) u[best[b]] = w[b];
    }
    const double a = 0.5 * eps * rng.uniform_pos();
    const double t = rng.uniform_pos();
    const Vec x = (1.0 - t * a) * xbar.vec() + (t * a) * u;
    const double margin = pot.value(x) - phi0;
    if (first || margin < out.min_margin) {
      out.min_margin = margin;
      out.worst_point = x;
      first = false;
    }
  }
  out.holds = out.min_margin > 0.0;
  return out;
}

}  // namespace popgame
