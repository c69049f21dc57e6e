#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mct {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Invalid shapes, incompatible specs, malformed configs.
struct StructuralError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values surfacing from training or objectives.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Sampling loops that cannot satisfy their constraints.
struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File format / persistence failures.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mct
