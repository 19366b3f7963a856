#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace popgame {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Input data violate a documented precondition: malformed simplex point,
// inconsistent game dimensions, unusable tolerance, bad scenario file, ...
// The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numerical integration cannot proceed (step-size underflow, or the state
// left the simplex by more than the projection tolerance).
// The CLI maps this to exit code 3.
struct IntegrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File-system failure while reading inputs or writing run outputs.
// The CLI maps this to exit code 4.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace popgame
