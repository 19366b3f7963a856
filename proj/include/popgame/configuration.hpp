#pragma once

#include <algorithm>
#include <initializer_list>
#include <vector>

#include "popgame/types.hpp"

namespace popgame {

// A population configuration: nonnegative action shares summing to one.
//
// Construction renormalizes rather than rejects: entries in [-1e-12, 0) are
// treated as integration round-off and clamped to zero, then the vector is
// divided by its sum. Anything more negative, a non-finite entry, or a
// nonpositive total is rejected. Exact zeros are preserved by the division,
// which is what keeps faces of the simplex invariant downstream.
class Configuration {
 public:
  static constexpr double kNegClamp = 1e-12;

  explicit Configuration(Vec v) : x_(std::move(v)) {
    if (x_.size() < 1) throw ValidationError("configuration: empty vector");
    if (!x_.allFinite())
      throw ValidationError("configuration: non-finite entry");
    for (Eigen::Index i = 0; i < x_.size(); ++i) {
      if (x_[i] < -kNegClamp)
        throw ValidationError("configuration: entry " + std::to_string(i) +
                              " is below -1e-12");
      if (x_[i] < 0.0) x_[i] = 0.0;
    }
    const double s = x_.sum();
    if (!(s > 0.0)) throw ValidationError("configuration: nonpositive sum");
    x_ /= s;
  }

  Configuration(std::initializer_list<double> v)
      : Configuration(Eigen::Map<const Vec>(v.begin(),
                                            static_cast<Eigen::Index>(v.size()))
                          .eval()) {}

  int size() const { return static_cast<int>(x_.size()); }
  double operator[](int i) const { return x_[i]; }
  const Vec& vec() const { return x_; }

 private:
  Vec x_;
};

// Vertex configuration delta^(i): all mass on action i (zero-based).
inline Configuration vertex(int m, int i) {
  if (i < 0 || i >= m)
    throw ValidationError("vertex: action index " + std::to_string(i) +
                          " outside 0.." + std::to_string(m - 1));
  Vec v = Vec::Zero(m);
  v[i] = 1.0;
  return Configuration(std::move(v));
}

inline Configuration centroid(int m) {
  return Configuration(Vec::Constant(m, 1.0 / m));
}

// Sorted zero-based indices of the actions a configuration uses.
using Support = std::vector<int>;

inline bool support_contains(const Support& s, int i) {
  return std::binary_search(s.begin(), s.end(), i);
}

// Euclidean projection of an arbitrary vector onto the unit simplex
// (Held–Wolfe–Crowder threshold construction via a descending sort).
inline Vec project_to_simplex(const Vec& v) {
  const Eigen::Index m = v.size();
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<double>());
  double css = 0.0, theta = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    css += u[k];
    const double t = (css - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) theta = t;
  }
  Vec out(m);
  for (Eigen::Index i = 0; i < m; ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

}  // namespace popgame
