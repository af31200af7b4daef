#include "gdalab/smooth_map.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gdalab/errors.hpp"

namespace gdalab {

void SmoothMap::check_param(const Vector& theta) const {
  if (theta.size() != param_count()) {
    throw DimensionError("parameter vector has length " + std::to_string(theta.size()) +
                         ", expected " + std::to_string(param_count()));
  }
}

void SmoothMap::check_output(const Vector& v) const {
  if (v.size() != output_dim()) {
    throw DimensionError("output-space vector has length " + std::to_string(v.size()) +
                         ", expected " + std::to_string(output_dim()));
  }
}

Vector SmoothMap::jacobian_transpose_times(const Vector& theta, const Vector& v) const {
  check_output(v);
  return jacobian(theta).transpose() * v;
}

Vector SmoothMap::jacobian_times(const Vector& theta, const Vector& direction) const {
  check_param(direction);
  return jacobian(theta) * direction;
}

Matrix SmoothMap::jacobian_gram(const Vector& theta) const {
  const Matrix J = jacobian(theta);
  return J * J.transpose();
}

Matrix SmoothMap::jacobian_difference_gram(const Vector& theta, const Vector& ref) const {
  const Matrix delta = jacobian(theta) - jacobian(ref);
  return delta * delta.transpose();
}

void SmoothMap::value_and_vjp(const Vector& theta, const Vector& v, Vector& value,
                              Vector& vjp) const {
  value = evaluate(theta);
  vjp = jacobian_transpose_times(theta, v);
}

void SmoothMap::value_and_residual_vjp(const Vector& theta, const Vector& y, Vector& value,
                                       Vector& vjp) const {
  check_output(y);
  value = evaluate(theta);
  vjp = jacobian_transpose_times(theta, value - y);
}

AffineMap::AffineMap(Matrix M, Vector b) : M_(std::move(M)), b_(std::move(b)) {
  if (b_.size() != M_.rows()) {
    throw DimensionError("affine offset length does not match the matrix row count");
  }
}

Vector AffineMap::evaluate(const Vector& theta) const {
  check_param(theta);
  return M_ * theta + b_;
}

Matrix AffineMap::jacobian(const Vector& theta) const {
  check_param(theta);
  return M_;
}

double operator_norm_from_gram(const Matrix& gram) {
  if (gram.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, solver.eigenvalues().maxCoeff()));
}

}  // namespace gdalab
