#pragma once

#include <Eigen/Dense>

namespace gdalab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A differentiable map f: R^p -> R^m. Everything in dynamics and stability is
// written against this interface so that any generator/feature-map pair can be
// plugged in; the only thing a subclass must provide is evaluate() and
// jacobian(). The remaining virtuals have dense defaults and exist so that
// structured maps (see GeneratorMap) can avoid materialising J.
class SmoothMap {
 public:
  virtual ~SmoothMap() = default;

  virtual Eigen::Index param_count() const = 0;
  virtual Eigen::Index output_dim() const = 0;

  virtual Vector evaluate(const Vector& theta) const = 0;
  /// m x p Jacobian at theta.
  virtual Matrix jacobian(const Vector& theta) const = 0;

  /// J(theta)^T v.
  virtual Vector jacobian_transpose_times(const Vector& theta, const Vector& v) const;
  /// J(theta) direction.
  virtual Vector jacobian_times(const Vector& theta, const Vector& direction) const;
  /// J(theta) J(theta)^T, an m x m matrix.
  virtual Matrix jacobian_gram(const Vector& theta) const;
  /// (J(theta) - J(ref)) (J(theta) - J(ref))^T.
  virtual Matrix jacobian_difference_gram(const Vector& theta, const Vector& ref) const;
  /// f(theta) and J(theta)^T v from one pass.
  virtual void value_and_vjp(const Vector& theta, const Vector& v, Vector& value,
                             Vector& vjp) const;
  /// f(theta) and J(theta)^T (f(theta) - y), the gradient of ||f - y||^2 / 2.
  virtual void value_and_residual_vjp(const Vector& theta, const Vector& y, Vector& value,
                                      Vector& vjp) const;

 protected:
  void check_param(const Vector& theta) const;
  void check_output(const Vector& v) const;
};

/// Affine map f(theta) = M theta + b. Its Jacobian is constant, which makes it
/// the reference case for linearisation tests.
class AffineMap final : public SmoothMap {
 public:
  AffineMap(Matrix M, Vector b);

  Eigen::Index param_count() const override { return M_.cols(); }
  Eigen::Index output_dim() const override { return M_.rows(); }
  Vector evaluate(const Vector& theta) const override;
  Matrix jacobian(const Vector& theta) const override;

  const Matrix& matrix() const { return M_; }
  const Vector& offset() const { return b_; }

 private:
  Matrix M_;
  Vector b_;
};

/// Largest singular value of an m x m Gram matrix's square root, i.e.
/// ||J|| given J J^T.
double operator_norm_from_gram(const Matrix& gram);

}  // namespace gdalab
