#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace triattn {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrixd = MatrixX<double>;
using Vectord = VectorX<double>;

// Dimension disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Request exceeds a hard resource cap (e.g. materializing a D^3 weight cube).
class CapacityError : public std::length_error {
 public:
  explicit CapacityError(const std::string& what) : std::length_error(what) {}
};

// Non-finite value produced where the caller requires finite arithmetic.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace triattn
