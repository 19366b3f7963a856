#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "popgame/configuration.hpp"
#include "popgame/costs.hpp"
#include "popgame/types.hpp"

namespace popgame {

enum class PotentialForm { binary, coordination, congestion, custom };

inline const char* to_string(PotentialForm f) {
  switch (f) {
    case PotentialForm::binary: return "binary";
    case PotentialForm::coordination: return "coordination";
    case PotentialForm::congestion: return "congestion";
    default: return "custom";
  }
}

// Scalar potential together with its gradient. Evaluators accept raw vectors
// rather than Configurations: finite-difference probes and border sampling
// need the formulas on a neighborhood of the simplex, not just on it. The
// defining property (reward differences equal gradient differences) is only
// promised on the simplex itself.
struct Potential {
  PotentialForm form = PotentialForm::custom;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
};

// Two-action reward matrix R = [[a, b], [c, d]] admits the potential
// phi(x) = ((a-c) x1^2 + (d-b) x2^2) / 2.
inline Potential binary_potential(const Mat& R) {
  if (R.rows() != 2 || R.cols() != 2)
    throw ValidationError("binary_potential: reward matrix must be 2x2");
  const double u = R(0, 0) - R(1, 0);  // a - c
  const double v = R(1, 1) - R(0, 1);  // d - b
  Potential p;
  p.form = PotentialForm::binary;
  p.value = [u, v](const Vec& x) {
    return 0.5 * (u * x[0] * x[0] + v * x[1] * x[1]);
  };
  p.gradient = [u, v](const Vec& x) {
    Vec g(2);
    g[0] = u * x[0];
    g[1] = v * x[1];
    return g;
  };
  return p;
}

// Diagonal reward matrix diag(d) with d_i > 0 (pure coordination) has
// potential sum_i d_i x_i^2 / 2.
inline Potential coordination_potential(const Vec& diag) {
  if (diag.size() < 1)
    throw ValidationError("coordination_potential: empty diagonal");
  if ((diag.array() <= 0.0).any())
    throw ValidationError(
        "coordination_potential: diagonal entries must be positive");
  Vec d = diag;
  Potential p;
  p.form = PotentialForm::coordination;
  p.value = [d](const Vec& x) {
    return 0.5 * (d.array() * x.array().square()).sum();
  };
  p.gradient = [d](const Vec& x) { return (d.array() * x.array()).matrix().eval(); };
  return p;
}

// Congestion potential sum_k Psi_k((Ax)_k); its gradient is exactly the
// reward A^T psi(Ax), which is what makes these games potential games.
inline Potential congestion_potential(const Mat& A,
                                      std::vector<CostFunction> costs) {
  if (A.rows() < 1 || A.cols() < 1)
    throw ValidationError("congestion_potential: empty incidence matrix");
  if (static_cast<Eigen::Index>(costs.size()) != A.rows())
    throw ValidationError(
        "congestion_potential: one cost per resource (matrix row) required");
  for (Eigen::Index k = 0; k < A.rows(); ++k)
    for (Eigen::Index i = 0; i < A.cols(); ++i)
      if (A(k, i) != 0.0 && A(k, i) != 1.0)
        throw ValidationError(
            "congestion_potential: incidence entries must be 0 or 1");
  Mat Ac = A;
  auto cs = std::make_shared<std::vector<CostFunction>>(std::move(costs));
  Potential p;
  p.form = PotentialForm::congestion;
  p.value = [Ac, cs](const Vec& x) {
    const Vec y = Ac * x;
    double v = 0.0;
    for (Eigen::Index k = 0; k < y.size(); ++k) v += (*cs)[k].Psi(y[k]);
    return v;
  };
  p.gradient = [Ac, cs](const Vec& x) {
    const Vec y = Ac * x;
    Vec psi(y.size());
    for (Eigen::Index k = 0; k < y.size(); ++k) psi[k] = (*cs)[k].psi(y[k]);
    return (Ac.transpose() * psi).eval();
  };
  return p;
}

inline Potential custom_potential(std::function<double(const Vec&)> value,
                                  std::function<Vec(const Vec&)> gradient) {
  if (!value || !gradient)
    throw ValidationError("custom_potential: value and gradient required");
  Potential p;
  p.form = PotentialForm::custom;
  p.value = std::move(value);
  p.gradient = std::move(gradient);
  return p;
}

inline double potential_eval(const Potential& p, const Configuration& x) {
  return p.value(x.vec());
}

inline Vec potential_gradient(const Potential& p, const Configuration& x) {
  return p.gradient(x.vec());
}

// Central finite differences with step h; falls back to a one-sided stencil
// for coordinates within h of the nonnegativity face, where custom forms may
// not be defined on the negative side.
inline Vec finite_difference_gradient(const Potential& p, const Vec& x,
                                      double h = 1e-5) {
  Vec g(x.size());
  Vec e = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    if (xi >= h) {
      e[i] = xi + h;
      const double up = p.value(e);
      e[i] = xi - h;
      const double dn = p.value(e);
      g[i] = (up - dn) / (2.0 * h);
    } else {
      e[i] = xi + h;
      const double up = p.value(e);
      e[i] = xi + 2.0 * h;
      const double up2 = p.value(e);
      e[i] = xi;
      const double at = p.value(e);
      // second-order one-sided stencil
      g[i] = (-3.0 * at + 4.0 * up - up2) / (2.0 * h);
    }
    e[i] = xi;
  }
  return g;
}

}  // namespace popgame
