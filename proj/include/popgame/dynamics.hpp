#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "popgame/game.hpp"
#include "popgame/random.hpp"
#include "popgame/types.hpp"

namespace popgame {

enum class RuleKind { replicator, arctan, custom };

inline const char* to_string(RuleKind k) {
  switch (k) {
    case RuleKind::replicator: return "replicator";
    case RuleKind::arctan: return "arctan";
    default: return "custom";
  }
}

// Pairwise imitation-rate family: F(x)_ij is the rate at which players using
// action i copy players using action j. Only the antisymmetric part
// F_ji - F_ij enters the dynamics; the defining requirement is the sign
// condition sgn(f_ij - f_ji) = sgn(r_j - r_i). Evaluators receive the
// current rewards so rules need no handle back to the game.
struct ImitationRule {
  RuleKind kind = RuleKind::custom;
  std::function<Mat(const Vec& x, const Vec& r)> rates;
  Mat gains;  // arctan only: the positive gain matrix K
  std::string label;
};

// f_ij = (r_j - r_i)/2. Together with sum_j x_j = 1 this reproduces the
// replicator dynamics x_i (r_i - rbar) exactly.
inline ImitationRule replicator_rule(const Game& g) {
  const int m = g.num_actions();
  ImitationRule rule;
  rule.kind = RuleKind::replicator;
  rule.label = "replicator";
  rule.rates = [m](const Vec&, const Vec& r) {
    Mat f(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) f(i, j) = 0.5 * (r[j] - r[i]);
    return f;
  };
  return rule;
}

// f_ij = 1/2 + arctan(K_ij (r_j - r_i)) / pi with K_ij > 0: a smooth
// (0,1)-valued switching probability. Heterogeneous gains keep the sign
// condition but break the stronger three-party ordering condition.
inline ImitationRule arctan_rule(const Game& g, const Mat& K) {
  const int m = g.num_actions();
  if (K.rows() != m || K.cols() != m)
    throw ValidationError("arctan_rule: gain matrix must be m x m");
  if (!(K.array() > 0.0).all())
    throw ValidationError("arctan_rule: gains must be positive");
  ImitationRule rule;
  rule.kind = RuleKind::arctan;
  rule.gains = K;
  rule.label = "arctan";
  Mat Kc = K;
  rule.rates = [m, Kc](const Vec&, const Vec& r) {
    Mat f(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        f(i, j) = 0.5 + std::atan(Kc(i, j) * (r[j] - r[i])) / M_PI;
    return f;
  };
  return rule;
}

// Gains drawn uniform on (lo, hi] from a seeded stream.
inline ImitationRule arctan_rule(const Game& g, std::uint64_t seed,
                                 double lo = 0.0, double hi = 1.0) {
  if (!(hi > lo) || lo < 0.0)
    throw ValidationError("arctan_rule: need 0 <= lo < hi for random gains");
  Rng rng(seed);
  return arctan_rule(g, random_gains(rng, g.num_actions(), lo, hi));
}

// Arbitrary pairwise rate f(r_i, r_j, x); the caller is responsible for the
// sign condition (check_sign_condition probes it empirically).
inline ImitationRule custom_rule(
    const Game& g,
    std::function<double(double ri, double rj, const Vec& x)> f,
    std::string label = "custom") {
  if (!f) throw ValidationError("custom_rule: rate function required");
  const int m = g.num_actions();
  ImitationRule rule;
  rule.kind = RuleKind::custom;
  rule.label = std::move(label);
  rule.rates = [m, f](const Vec& x, const Vec& r) {
    Mat out(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) out(i, j) = f(r[i], r[j], x);
    return out;
  };
  return rule;
}

// The two evaluation routes for the imitation vector field. They are the
// same algebra arranged differently and are kept separate on purpose: tests
// and `verify` cross-check them against each other, so do not "simplify"
// one into the other.
enum class FieldRoute { pairwise_sum, matrix_form };

// Raw-vector variant used by integrator stages.
inline Vec vector_field_raw(const Game& g, const ImitationRule& rule,
                            const Vec& x,
                            FieldRoute route = FieldRoute::pairwise_sum) {
  const Vec r = g.rewards(x);
  const Mat f = rule.rates(x, r);
  const int m = static_cast<int>(x.size());
  if (route == FieldRoute::pairwise_sum) {
    // x_i sum_j x_j (f_ji - f_ij); a zero share forces an exactly zero
    // derivative, which is what keeps faces invariant to the last bit.
    Vec dx(m);
    for (int i = 0; i < m; ++i) {
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += x[j] * (f(j, i) - f(i, j));
      dx[i] = x[i] * s;
    }
    return dx;
  }
  // diag(x) (F^T - F) x
  return (x.array() * ((f.transpose() - f) * x).array()).matrix();
}

inline Vec vector_field(const Game& g, const ImitationRule& rule,
                        const Configuration& x,
                        FieldRoute route = FieldRoute::pairwise_sum) {
  return vector_field_raw(g, rule, x.vec(), route);
}

// Time derivative of the potential along the flow, written purely in terms
// of rewards and imitation rates:
//   dPhi/dt = 1/2 sum_ij x_i x_j (r_i - r_j)(f_ji - f_ij).
// Nonnegative term by term under the sign condition. This route never
// touches the potential, so it is an independent cross-check of the
// gradient route below.
inline double phi_dot_pairwise(const Game& g, const ImitationRule& rule,
                               const Vec& x) {
  const Vec r = g.rewards(x);
  const Mat f = rule.rates(x, r);
  const int m = static_cast<int>(x.size());
  double s = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      s += x[i] * x[j] * (r[i] - r[j]) * (f(j, i) - f(i, j));
  return 0.5 * s;
}

// Gradient route: dPhi/dt = grad Phi(x) . xdot.
inline double phi_dot_gradient(const Game& g, const ImitationRule& rule,
                               const Potential& p, const Vec& x) {
  return p.gradient(x).dot(vector_field_raw(g, rule, x));
}

inline double phi_dot_gradient(const Game& g, const ImitationRule& rule,
                               const Vec& x) {
  if (!g.potential())
    throw ValidationError("phi_dot_gradient: game has no attached potential");
  return phi_dot_gradient(g, rule, *g.potential(), x);
}

}  // namespace popgame
