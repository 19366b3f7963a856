#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "popgame/types.hpp"

namespace popgame {

namespace detail {

// Adaptive Simpson quadrature with absolute tolerance; used to supply the
// antiderivative of a cost whose integral was not given in closed form.
inline double simpson_panel(const std::function<double(double)>& f, double a,
                            double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double adaptive_simpson(const std::function<double(double)>& f,
                               double a, double fa, double b, double fb,
                               double fm, double whole, double tol,
                               int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson_panel(f, a, fa, m, fm, flm);
  const double right = simpson_panel(f, m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol)
    return left + right + delta / 15.0;
  return adaptive_simpson(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1);
}

inline double integrate_abs_tol(const std::function<double(double)>& f,
                                double a, double b, double tol) {
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = simpson_panel(f, a, fa, b, fb, fm);
  return adaptive_simpson(f, a, fa, b, fb, fm, whole, tol, 48);
}

}  // namespace detail

// Scalar per-resource reward: psi maps aggregate load to the reward of using
// the resource (a decreasing psi models congestion cost), Psi is the
// antiderivative with Psi(0) = 0, i.e. the integral of psi over [0, y]. The
// congestion potential only needs gradient differences, but the fixed
// constant keeps reported potential values comparable across builders.
struct CostFunction {
  std::function<double(double)> psi;
  std::function<double(double)> Psi;
  std::string label;
  // Set when psi is affine (slope, intercept); lets equilibrium enumeration
  // treat affine-cost congestion games as affine-reward games.
  std::optional<std::pair<double, double>> affine;
};

// psi(y) = slope*y + intercept, Psi(y) = slope*y^2/2 + intercept*y.
inline CostFunction affine_cost(double slope, double intercept) {
  CostFunction c;
  c.psi = [slope, intercept](double y) { return slope * y + intercept; };
  c.Psi = [slope, intercept](double y) {
    return 0.5 * slope * y * y + intercept * y;
  };
  c.label = "affine(" + std::to_string(slope) + "," +
            std::to_string(intercept) + ")";
  c.affine = {slope, intercept};
  return c;
}

// psi(y) = exp(-rate*y) with rate > 0 (strictly decreasing),
// Psi(y) = (1 - exp(-rate*y))/rate.
inline CostFunction exp_cost(double rate) {
  if (!(rate > 0.0)) throw ValidationError("exp_cost: rate must be positive");
  CostFunction c;
  c.psi = [rate](double y) { return std::exp(-rate * y); };
  c.Psi = [rate](double y) { return (1.0 - std::exp(-rate * y)) / rate; };
  c.label = "exp(" + std::to_string(rate) + ")";
  return c;
}

// Arbitrary psi; when no antiderivative is supplied, Psi(y) is computed as
// the integral of psi over [0, y] by adaptive quadrature (abs tol 1e-10).
inline CostFunction custom_cost(std::function<double(double)> psi,
                                std::function<double(double)> Psi = {},
                                std::string label = "custom") {
  if (!psi) throw ValidationError("custom_cost: psi is required");
  CostFunction c;
  c.psi = psi;
  if (Psi) {
    c.Psi = std::move(Psi);
  } else {
    c.Psi = [psi](double y) {
      return detail::integrate_abs_tol(psi, 0.0, y, 1e-10);
    };
  }
  c.label = std::move(label);
  return c;
}

}  // namespace popgame
