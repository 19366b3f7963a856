#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "popgame/dynamics.hpp"
#include "popgame/game.hpp"
#include "popgame/potential.hpp"
#include "popgame/random.hpp"
#include "popgame/types.hpp"

namespace popgame {

// A concrete counterexample to a pairwise/triple condition: the sampled
// configuration, the actions involved (k = -1 for pairwise checks), and how
// far the inequality is violated.
struct ConditionWitness {
  Vec x;
  int i = -1, j = -1, k = -1;
  double margin = 0.0;
};

struct ConditionReport {
  bool holds = true;
  int samples = 0;
  double worst_margin = 0.0;  // largest violation seen (0 when none)
  std::optional<ConditionWitness> witness;
};

namespace detail {

// Largest sign-condition violation at x over all action pairs:
// sgn(f_ij - f_ji) must equal sgn(r_j - r_i) whenever rewards differ by more
// than tol; near-ties only require the rate gap to collapse as well.
inline ConditionWitness worst_sign_violation(const Game& g,
                                             const ImitationRule& rule,
                                             const Vec& x, double tol) {
  const Vec r = g.rewards(x);
  const Mat f = rule.rates(x, r);
  const int m = static_cast<int>(x.size());
  ConditionWitness w{x, -1, -1, -1, 0.0};
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j) continue;
      const double dr = r[j] - r[i];
      const double df = f(i, j) - f(j, i);
      double viol = 0.0;
      if (dr > tol) {
        viol = df <= 0.0 ? tol - df : 0.0;  // needed strictly positive
      } else if (dr < -tol) {
        viol = df >= 0.0 ? tol + df : 0.0;
      } else {
        // equal rewards within tol: the rates must agree up to a Lipschitz
        // multiple of tol; 10x is the loose factor used throughout
        viol = std::max(std::abs(df) - 10.0 * tol, 0.0);
      }
      if (viol > w.margin) w = {x, i, j, -1, viol};
    }
  return w;
}

// Largest ordering-condition violation at x over all action triples:
// r_i >= r_j must imply f_ki - f_ik >= f_kj - f_jk for every third action k.
inline ConditionWitness worst_order_violation(const Game& g,
                                              const ImitationRule& rule,
                                              const Vec& x, double tol) {
  const Vec r = g.rewards(x);
  const Mat f = rule.rates(x, r);
  const int m = static_cast<int>(x.size());
  ConditionWitness w{x, -1, -1, -1, 0.0};
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      if (i == j || r[i] - r[j] <= tol) continue;  // need r_i > r_j clearly
      for (int k = 0; k < m; ++k) {
        const double gi = f(k, i) - f(i, k);
        const double gj = f(k, j) - f(j, k);
        const double viol = gj - gi - tol;  // positive = condition broken
        if (viol > w.margin) w = {x, i, j, k, viol};
      }
    }
  return w;
}

// Local random-restart refinement: tries to enlarge a violation margin by
// perturbing the witness configuration, so reported witnesses are sturdy
// rather than borderline.
template <typename ViolationFn>
inline ConditionWitness sharpen_witness(ConditionWitness w, ViolationFn viol_at,
                                        Rng& rng) {
  const int m = static_cast<int>(w.x.size());
  double scale = 0.25;
  for (int round = 0; round < 6; ++round, scale *= 0.5)
    for (int trial = 0; trial < 40; ++trial) {
      Vec cand = w.x;
      for (int i = 0; i < m; ++i)
        cand[i] = std::max(0.0, cand[i] + scale * (rng.uniform() - 0.5));
      const double s = cand.sum();
      if (!(s > 0.0)) continue;
      cand /= s;
      const ConditionWitness better = viol_at(cand);
      if (better.margin > w.margin) w = better;
    }
  return w;
}

}  // namespace detail

// Samples the simplex and checks the sign condition that defines imitation
// dynamics. Any violation is refined into a sturdy witness and re-verified
// by a fresh evaluation before being reported.
inline ConditionReport check_sign_condition(const Game& g,
                                            const ImitationRule& rule,
                                            int n_samples = 256,
                                            std::uint64_t seed = 0x51619ab1ULL,
                                            double tol = 1e-9) {
  Rng rng(seed);
  const int m = g.num_actions();
  ConditionReport rep;
  rep.samples = n_samples;
  ConditionWitness worst;
  for (int n = 0; n < n_samples; ++n) {
    const Vec x = dirichlet_uniform(rng, m);
    const ConditionWitness w = detail::worst_sign_violation(g, rule, x, tol);
    if (w.margin > worst.margin) worst = w;
  }
  if (worst.margin > 0.0) {
    worst = detail::sharpen_witness(
        worst,
        [&](const Vec& x) { return detail::worst_sign_violation(g, rule, x, tol); },
        rng);
    // re-verify from scratch before reporting
    const ConditionWitness again =
        detail::worst_sign_violation(g, rule, worst.x, tol);
    if (again.margin > 0.0) {
      rep.holds = false;
      rep.worst_margin = again.margin;
      rep.witness = again;
    }
  }
  return rep;
}

// Samples the simplex and checks the stronger three-party ordering property
// that single-gain imitation rules satisfy but heterogeneous-gain rules
// generally break. Violations are sharpened and re-verified, so a reported
// witness can be checked by direct evaluation.
inline ConditionReport check_order_condition(const Game& g,
                                             const ImitationRule& rule,
                                             int n_samples = 256,
                                             std::uint64_t seed = 0x08de8c41ULL,
                                             double tol = 1e-9) {
  Rng rng(seed);
  const int m = g.num_actions();
  ConditionReport rep;
  rep.samples = n_samples;
  ConditionWitness worst;
  for (int n = 0; n < n_samples; ++n) {
    const Vec x = dirichlet_uniform(rng, m);
    const ConditionWitness w = detail::worst_order_violation(g, rule, x, tol);
    if (w.margin > worst.margin) worst = w;
  }
  if (worst.margin > 0.0) {
    worst = detail::sharpen_witness(
        worst,
        [&](const Vec& x) { return detail::worst_order_violation(g, rule, x, tol); },
        rng);
    const ConditionWitness again =
        detail::worst_order_violation(g, rule, worst.x, tol);
    if (again.margin > 0.0) {
      rep.holds = false;
      rep.worst_margin = again.margin;
      rep.witness = again;
    }
  }
  return rep;
}

struct IdentityReport {
  bool holds = true;
  double max_violation = 0.0;
  int samples = 0;
};

// Checks the defining property of a potential game on sampled interior
// configurations: reward differences must equal the corresponding potential
// gradient differences, r_j - r_i = dPhi/dx_j - dPhi/dx_i.
inline IdentityReport verify_potential_identity(const Game& g,
                                                const Potential& pot,
                                                int n_samples = 256,
                                                std::uint64_t seed = 0x1de47175ULL,
                                                double tol = 1e-9) {
  Rng rng(seed);
  const int m = g.num_actions();
  IdentityReport rep;
  rep.samples = n_samples;
  for (int n = 0; n < n_samples; ++n) {
    const Vec x = dirichlet_uniform(rng, m);
    const Vec r = g.rewards(x);
    const Vec grad = pot.gradient(x);
    for (int i = 0; i < m; ++i)
      for (int j = i + 1; j < m; ++j) {
        const double v = std::abs((r[j] - r[i]) - (grad[j] - grad[i]));
        rep.max_violation = std::max(rep.max_violation, v);
      }
  }
  rep.holds = rep.max_violation <= tol;
  return rep;
}

inline IdentityReport verify_potential_identity(const Game& g,
                                                int n_samples = 256,
                                                std::uint64_t seed = 0x1de47175ULL,
                                                double tol = 1e-9) {
  if (!g.potential())
    throw ValidationError("verify_potential_identity: game has no attached potential");
  return verify_potential_identity(g, *g.potential(), n_samples, seed, tol);
}

}  // namespace popgame
