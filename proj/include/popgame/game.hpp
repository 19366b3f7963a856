#pragma once

#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "popgame/configuration.hpp"
#include "popgame/costs.hpp"
#include "popgame/potential.hpp"
#include "popgame/types.hpp"

namespace popgame {

enum class GameFamily { linear, congestion, custom };

inline const char* to_string(GameFamily f) {
  switch (f) {
    case GameFamily::linear: return "linear";
    case GameFamily::congestion: return "congestion";
    default: return "custom";
  }
}

struct ActionSet {
  int m = 0;
  std::vector<std::string> labels;  // optional; empty means "1".."m"
};

namespace detail {
inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace detail

// A continuous population game: an action set plus a reward vector field
// r : simplex -> R^m. Three families are supported.
//   linear     r(x) = R x
//   congestion r(x) = A^T psi(Ax), A a 0/1 resource-action incidence
//   custom     any callable (code-level only)
// A potential can be attached; integration and verification use it when
// present. Games are cheap values at the sizes handled here; copying is fine.
class Game {
 public:
  static Game linear(const Mat& R) {
    if (R.rows() != R.cols() || R.rows() < 1)
      throw ValidationError("linear game: reward matrix must be square");
    if (!R.allFinite())
      throw ValidationError("linear game: non-finite reward entry");
    Game g;
    g.family_ = GameFamily::linear;
    g.actions_.m = static_cast<int>(R.rows());
    g.R_ = R;
    return g;
  }

  static Game congestion(const Mat& A, std::vector<CostFunction> costs) {
    if (A.rows() < 1 || A.cols() < 1)
      throw ValidationError("congestion game: empty incidence matrix");
    for (Eigen::Index k = 0; k < A.rows(); ++k)
      for (Eigen::Index i = 0; i < A.cols(); ++i)
        if (A(k, i) != 0.0 && A(k, i) != 1.0)
          throw ValidationError(
              "congestion game: incidence entries must be 0 or 1");
    if (static_cast<Eigen::Index>(costs.size()) != A.rows())
      throw ValidationError(
          "congestion game: one cost per resource (matrix row) required");
    for (const auto& c : costs)
      if (!c.psi) throw ValidationError("congestion game: cost without psi");
    Game g;
    g.family_ = GameFamily::congestion;
    g.actions_.m = static_cast<int>(A.cols());
    g.A_ = A;
    g.costs_ = std::move(costs);
    return g;
  }

  static Game custom(int m, std::function<Vec(const Vec&)> rewards,
                     std::string tag = "custom") {
    if (m < 1) throw ValidationError("custom game: need at least one action");
    if (!rewards) throw ValidationError("custom game: reward function required");
    Game g;
    g.family_ = GameFamily::custom;
    g.actions_.m = m;
    g.custom_rewards_ = std::move(rewards);
    g.tag_ = std::move(tag);
    return g;
  }

  int num_actions() const { return actions_.m; }
  GameFamily family() const { return family_; }
  const ActionSet& actions() const { return actions_; }

  // Raw-vector evaluation; used by integrator stages and finite differences,
  // where intermediate states live near but not on the simplex.
  Vec rewards(const Vec& x) const {
    if (x.size() != actions_.m)
      throw ValidationError("rewards: dimension mismatch");
    switch (family_) {
      case GameFamily::linear:
        return R_ * x;
      case GameFamily::congestion: {
        const Vec y = A_ * x;
        Vec psi(y.size());
        for (Eigen::Index k = 0; k < y.size(); ++k) psi[k] = costs_[k].psi(y[k]);
        return A_.transpose() * psi;
      }
      default:
        return custom_rewards_(x);
    }
  }
  Vec rewards(const Configuration& x) const { return rewards(x.vec()); }

  const Mat& reward_matrix() const {
    if (family_ != GameFamily::linear)
      throw ValidationError("reward_matrix: not a linear game");
    return R_;
  }
  const Mat& incidence() const {
    if (family_ != GameFamily::congestion)
      throw ValidationError("incidence: not a congestion game");
    return A_;
  }
  const std::vector<CostFunction>& costs() const {
    if (family_ != GameFamily::congestion)
      throw ValidationError("costs: not a congestion game");
    return costs_;
  }

  Game& attach_potential(Potential p) {
    potential_ = std::move(p);
    return *this;
  }
  const std::optional<Potential>& potential() const { return potential_; }

  // Stable identifier tying derived artifacts (equilibrium sets, summaries)
  // to the game they came from.
  std::string digest() const {
    std::string d = std::string(to_string(family_)) + ":" +
                    std::to_string(actions_.m);
    if (family_ == GameFamily::linear) {
      d += ":[";
      for (Eigen::Index i = 0; i < R_.rows(); ++i) {
        if (i) d += ";";
        for (Eigen::Index j = 0; j < R_.cols(); ++j) {
          if (j) d += ",";
          d += detail::fmt_g(R_(i, j));
        }
      }
      d += "]";
    } else if (family_ == GameFamily::congestion) {
      d += ":[";
      for (Eigen::Index k = 0; k < A_.rows(); ++k) {
        if (k) d += ";";
        for (Eigen::Index j = 0; j < A_.cols(); ++j) {
          if (j) d += ",";
          d += A_(k, j) == 1.0 ? "1" : "0";
        }
      }
      d += "]:";
      for (std::size_t k = 0; k < costs_.size(); ++k) {
        if (k) d += ",";
        d += costs_[k].label;
      }
    } else {
      d += ":" + tag_;
    }
    return d;
  }

 private:
  Game() = default;
  GameFamily family_ = GameFamily::custom;
  ActionSet actions_;
  Mat R_;
  Mat A_;
  std::vector<CostFunction> costs_;
  std::function<Vec(const Vec&)> custom_rewards_;
  std::string tag_;
  std::optional<Potential> potential_;
};

inline Vec reward_eval(const Game& g, const Configuration& x) {
  return g.rewards(x);
}

inline double max_reward(const Game& g, const Configuration& x) {
  return g.rewards(x).maxCoeff();
}

// Population-average reward x . r(x).
inline double mean_reward(const Game& g, const Configuration& x) {
  return x.vec().dot(g.rewards(x));
}

// Actions carrying more than `threshold` mass. The threshold must stay below
// 1/m or it could empty every support, which is never meaningful.
inline Support restrict_to_support(const Configuration& x,
                                   double threshold = 1e-9) {
  if (threshold < 0.0 || threshold >= 1.0 / x.size())
    throw ValidationError("restrict_to_support: threshold must be in [0, 1/m)");
  Support s;
  for (int i = 0; i < x.size(); ++i)
    if (x[i] > threshold) s.push_back(i);
  return s;
}

enum class BinaryKind { coordination, anti_coordination, dominance };

inline const char* to_string(BinaryKind k) {
  switch (k) {
    case BinaryKind::coordination: return "coordination";
    case BinaryKind::anti_coordination: return "anti-coordination";
    default: return "dominance";
  }
}

struct BinaryClassification {
  BinaryKind kind;
  // Mixed rest point, present for (anti-)coordination:
  // x1 = (d-b)/(a-c+d-b) for R = [[a,b],[c,d]].
  std::optional<Configuration> interior;
  int dominant_action = -1;  // zero-based; set for dominance only
  bool weak = false;         // dominance holds only weakly (tied row)
};

// Classifies a 2x2 linear game by the signs of a-c and d-b. Ties make the
// reward difference r1-r2 lose strictness somewhere, which is reported as
// weak dominance rather than as a separate degenerate class.
inline BinaryClassification classify_binary_game(const Game& g) {
  if (g.family() != GameFamily::linear || g.num_actions() != 2)
    throw ValidationError("classify_binary_game: need a 2x2 linear game");
  const Mat& R = g.reward_matrix();
  const double a = R(0, 0), b = R(0, 1), c = R(1, 0), d = R(1, 1);
  const double u = a - c, v = d - b;
  BinaryClassification out{BinaryKind::dominance, std::nullopt, -1, false};
  if (u > 0.0 && v > 0.0) {
    out.kind = BinaryKind::coordination;
    out.interior = Configuration{v / (u + v), u / (u + v)};
  } else if (u < 0.0 && v < 0.0) {
    out.kind = BinaryKind::anti_coordination;
    out.interior = Configuration{v / (u + v), u / (u + v)};
  } else if (u >= 0.0 && v <= 0.0) {
    // r1 - r2 = u*x1 - v*x2 >= 0 everywhere on the simplex
    out.kind = BinaryKind::dominance;
    out.dominant_action = 0;
    out.weak = (u == 0.0 || v == 0.0);
  } else {
    out.kind = BinaryKind::dominance;
    out.dominant_action = 1;
    out.weak = (u == 0.0 || v == 0.0);
  }
  return out;
}

}  // namespace popgame
