#pragma once

#include <cstdint>
#include <functional>
#include <memory>

#include <Eigen/Dense>

#include "gdalab/rng.hpp"
#include "gdalab/smooth_map.hpp"

namespace gdalab {

// One-hidden-layer ReLU generator G(z) = V relu(W z) paired with a linear
// discriminator D(x) = <d, x>. V is drawn once and kept fixed; W is the only
// trained weight.
//
// Flattening convention: a parameter vector theta is vec(W) with the rows
// w_1, ..., w_k concatenated (row-stacked), so column l*d + j of the Jacobian
// belongs to W(l, j).
//
// relu'(0) is taken to be 1.

struct ModelConfig {
  int m = 16;  ///< output dimension
  int d = 8;   ///< latent dimension
  int k = 64;  ///< hidden width
  int n = 256; ///< number of latent samples / data points
  double sigma_v = 1.0;
  double sigma_w = 1.0;
  double sigma_z = 1.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless all dimensions are >= 1 and all standard
  /// deviations are > 0.
  void validate() const;
};

/// Draws the n x m target matrix (rows x_i).
using TargetSampler = std::function<Matrix(Rng& rng, int n, int m)>;

/// x_i ~ N(mean, I_m) i.i.d.
TargetSampler gaussian_targets(Vector mean);

/// Draws a mean mu ~ N(0, I_m) from the stream, then x_i ~ N(mu, I_m).
TargetSampler random_mean_gaussian_targets();

// A sampled problem. Immutable once built; share it through
// std::shared_ptr<const ProblemInstance>.
struct ProblemInstance {
  Matrix Z;        ///< n x d, rows z_i
  Matrix V;        ///< m x k
  Matrix W0;       ///< k x d
  Matrix targets;  ///< n x m, rows x_i
  Vector xbar;     ///< m, mean of the targets

  int m() const { return static_cast<int>(V.rows()); }
  int k() const { return static_cast<int>(V.cols()); }
  int d() const { return static_cast<int>(Z.cols()); }
  int n() const { return static_cast<int>(Z.rows()); }

  /// Assembles an instance from explicit matrices, validating shapes and
  /// computing xbar.
  static ProblemInstance from_parts(Matrix Z, Matrix V, Matrix W0, Matrix targets);
};

/// Samples Z, V, W0 (in that order, entry by entry in row-major order) and then
/// the targets from one Rng seeded with config.seed.
ProblemInstance sample_problem(const ModelConfig& config,
                               const TargetSampler& targets = random_mean_gaussian_targets());

struct GeneratorParams {
  Matrix W;  ///< k x d

  /// Row-stacked vec(W).
  Vector flatten() const;
  static GeneratorParams unflatten(const Vector& theta, int k, int d);
};

struct JacobianMatrix {
  Matrix J;  ///< m x (k d), columns indexed row-stacked
};

/// f(W) = (1/n) sum_i V relu(W z_i).
Vector generator_forward(const GeneratorParams& params, const ProblemInstance& inst);

/// r(W) = f(W) - xbar.
Vector residual(const GeneratorParams& params, const ProblemInstance& inst);

/// Analytic Jacobian of generator_forward with respect to row-stacked vec(W).
JacobianMatrix jacobian(const GeneratorParams& params, const ProblemInstance& inst);

/// D_ll = || Z^T relu'(Z w_l) ||, the k diagonal entries of D.
Vector activation_norms(const GeneratorParams& params, const ProblemInstance& inst);

/// J J^T = (1/n^2) V D^2 V^T, computed without forming J.
Matrix jacobian_gram(const GeneratorParams& params, const ProblemInstance& inst);

/// (J(W) - J(W_ref))(J(W) - J(W_ref))^T in the same factored form.
Matrix jacobian_difference_gram(const GeneratorParams& params, const GeneratorParams& ref,
                                const ProblemInstance& inst);

/// The min-max objective in its original sign convention:
///   L(W, d) = <d, (1/n) sum_i (x_i - V relu(W z_i))> - ||d||^2 / 2.
double minmax_value(const GeneratorParams& params, const Vector& dvec,
                    const ProblemInstance& inst);

/// The solver's form h(W, d) = <d, f(W) - xbar> - ||d||^2 / 2, which equals
/// L(W, -d). Its maximum over d is ||r||^2 / 2 at d = r.
double meta_value(const GeneratorParams& params, const Vector& dvec,
                  const ProblemInstance& inst);

struct MinmaxGradients {
  Matrix grad_W;  ///< k x d, gradient of L with respect to W
  Vector grad_d;  ///< m, gradient of L with respect to d
};

/// Gradients of L(W, d) (original sign convention).
MinmaxGradients minmax_gradients(const GeneratorParams& params, const Vector& dvec,
                                 const ProblemInstance& inst);

// SmoothMap adapter: theta = row-stacked vec(W), f(theta) = generator mean.
class GeneratorMap final : public SmoothMap {
 public:
  explicit GeneratorMap(std::shared_ptr<const ProblemInstance> inst);

  Eigen::Index param_count() const override;
  Eigen::Index output_dim() const override;
  Vector evaluate(const Vector& theta) const override;
  Matrix jacobian(const Vector& theta) const override;
  Vector jacobian_transpose_times(const Vector& theta, const Vector& v) const override;
  Vector jacobian_times(const Vector& theta, const Vector& direction) const override;
  Matrix jacobian_gram(const Vector& theta) const override;
  Matrix jacobian_difference_gram(const Vector& theta, const Vector& ref) const override;
  void value_and_vjp(const Vector& theta, const Vector& v, Vector& value,
                     Vector& vjp) const override;
  void value_and_residual_vjp(const Vector& theta, const Vector& y, Vector& value,
                              Vector& vjp) const override;

  const ProblemInstance& instance() const { return *inst_; }
  Vector initial_theta() const;

 private:
  std::shared_ptr<const ProblemInstance> inst_;
};

}  // namespace gdalab
