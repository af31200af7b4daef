#include "gdalab/genmodel.hpp"

#include <string>
#include <utility>

#include "gdalab/errors.hpp"

namespace gdalab {
namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_params(const GeneratorParams& params, const ProblemInstance& inst) {
  if (params.W.rows() != inst.k() || params.W.cols() != inst.d()) {
    throw DimensionError("W is " + std::to_string(params.W.rows()) + "x" +
                         std::to_string(params.W.cols()) + ", instance expects " +
                         std::to_string(inst.k()) + "x" + std::to_string(inst.d()));
  }
}

void check_dvec(const Vector& dvec, const ProblemInstance& inst) {
  if (dvec.size() != inst.m()) {
    throw DimensionError("discriminator has length " + std::to_string(dvec.size()) +
                         ", expected " + std::to_string(inst.m()));
  }
}

Matrix fill_gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix out(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = stddev * rng.normal();
  }
  return out;
}

// Pre-activations H(i, l) = w_l^T z_i, n x k.
template <typename Derived>
Matrix preactivations(const Eigen::MatrixBase<Derived>& W, const ProblemInstance& inst) {
  return inst.Z * W.transpose();
}

// G(l, :) = (1/n) sum_i relu'(w_l^T z_i) z_i^T, so that the Jacobian column
// block l is V(:, l) G(l, :). G has k rows and d columns.
Matrix gate_means(const Matrix& H, const ProblemInstance& inst) {
  const Matrix mask = (H.array() >= 0.0).cast<double>().matrix();
  return (mask.transpose() * inst.Z) / static_cast<double>(inst.n());
}

Vector hidden_means(const Matrix& H) {
  return H.cwiseMax(0.0).colwise().mean().transpose();
}

Matrix weighted_gram(const Matrix& V, const Vector& weights) {
  return V * weights.asDiagonal() * V.transpose();
}

// Per-thread buffers for the iteration hot path; reusing them avoids
// allocating several n x k matrices per step.
struct Scratch {
  Matrix H;
  Matrix gates;
  Matrix G;
  Vector hidden;
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

// Fills s.H and s.hidden for the row-stacked parameter vector theta.
void forward_into(const Vector& theta, const ProblemInstance& inst, Scratch& s) {
  const Eigen::Map<const RowMajorMatrix> W(theta.data(), inst.k(), inst.d());
  s.H.resize(inst.n(), inst.k());
  s.H.noalias() = inst.Z * W.transpose();
  s.hidden.resize(inst.k());
  s.hidden.noalias() = s.H.cwiseMax(0.0).colwise().mean().transpose();
}

// Writes diag(scale) G, row-stacked, into out. Needs s.H from forward_into.
void scaled_gate_means_into(const ProblemInstance& inst, const Vector& scale, Scratch& s,
                            Vector& out) {
  s.gates.resize(inst.n(), inst.k());
  s.gates = (s.H.array() >= 0.0).cast<double>().matrix();
  s.G.resize(inst.k(), inst.d());
  s.G.noalias() = s.gates.transpose() * inst.Z;
  out.resize(static_cast<Eigen::Index>(inst.k()) * inst.d());
  Eigen::Map<RowMajorMatrix>(out.data(), inst.k(), inst.d()) =
      (scale / static_cast<double>(inst.n())).asDiagonal() * s.G;
}

}  // namespace

void ModelConfig::validate() const {
  if (m < 1 || d < 1 || k < 1 || n < 1) {
    throw ConfigError("model dimensions m, d, k, n must all be >= 1");
  }
  if (!(sigma_v > 0.0) || !(sigma_w > 0.0) || !(sigma_z > 0.0)) {
    throw ConfigError("sigma_v, sigma_w and sigma_z must be > 0");
  }
}

TargetSampler gaussian_targets(Vector mean) {
  return [mean = std::move(mean)](Rng& rng, int n, int m) {
    if (mean.size() != m) throw DimensionError("target mean length does not match m");
    Matrix x(n, m);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < m; ++j) x(i, j) = mean(j) + rng.normal();
    }
    return x;
  };
}

TargetSampler random_mean_gaussian_targets() {
  return [](Rng& rng, int n, int m) {
    Vector mean(m);
    for (int j = 0; j < m; ++j) mean(j) = rng.normal();
    return gaussian_targets(mean)(rng, n, m);
  };
}

ProblemInstance ProblemInstance::from_parts(Matrix Z, Matrix V, Matrix W0, Matrix targets) {
  if (W0.rows() != V.cols()) throw DimensionError("W0 row count must equal V column count");
  if (W0.cols() != Z.cols()) throw DimensionError("W0 column count must equal latent dim");
  if (targets.rows() != Z.rows()) throw DimensionError("targets and Z need the same row count");
  if (targets.cols() != V.rows()) throw DimensionError("target dimension must equal V row count");
  if (Z.rows() < 1 || V.rows() < 1 || V.cols() < 1 || Z.cols() < 1) {
    throw DimensionError("empty problem instance");
  }
  ProblemInstance inst;
  inst.xbar = targets.colwise().mean().transpose();
  inst.Z = std::move(Z);
  inst.V = std::move(V);
  inst.W0 = std::move(W0);
  inst.targets = std::move(targets);
  return inst;
}

ProblemInstance sample_problem(const ModelConfig& config, const TargetSampler& targets) {
  config.validate();
  Rng rng(config.seed);
  Matrix Z = fill_gaussian(rng, config.n, config.d, config.sigma_z);
  Matrix V = fill_gaussian(rng, config.m, config.k, config.sigma_v);
  Matrix W0 = fill_gaussian(rng, config.k, config.d, config.sigma_w);
  Matrix X = targets(rng, config.n, config.m);
  return ProblemInstance::from_parts(std::move(Z), std::move(V), std::move(W0), std::move(X));
}

Vector GeneratorParams::flatten() const {
  Vector theta(W.size());
  Eigen::Map<RowMajorMatrix>(theta.data(), W.rows(), W.cols()) = W;
  return theta;
}

GeneratorParams GeneratorParams::unflatten(const Vector& theta, int k, int d) {
  if (theta.size() != static_cast<Eigen::Index>(k) * d) {
    throw DimensionError("parameter vector length is not k*d");
  }
  return {Eigen::Map<const RowMajorMatrix>(theta.data(), k, d)};
}

Vector generator_forward(const GeneratorParams& params, const ProblemInstance& inst) {
  check_params(params, inst);
  return inst.V * hidden_means(preactivations(params.W, inst));
}

Vector residual(const GeneratorParams& params, const ProblemInstance& inst) {
  return generator_forward(params, inst) - inst.xbar;
}

JacobianMatrix jacobian(const GeneratorParams& params, const ProblemInstance& inst) {
  check_params(params, inst);
  const Matrix G = gate_means(preactivations(params.W, inst), inst);
  const int k = inst.k();
  const int d = inst.d();
  JacobianMatrix out{Matrix(inst.m(), static_cast<Eigen::Index>(k) * d)};
  for (int l = 0; l < k; ++l) {
    out.J.middleCols(static_cast<Eigen::Index>(l) * d, d).noalias() = inst.V.col(l) * G.row(l);
  }
  return out;
}

Vector activation_norms(const GeneratorParams& params, const ProblemInstance& inst) {
  check_params(params, inst);
  const Matrix G = gate_means(preactivations(params.W, inst), inst);
  return G.rowwise().norm() * static_cast<double>(inst.n());
}

Matrix jacobian_gram(const GeneratorParams& params, const ProblemInstance& inst) {
  check_params(params, inst);
  const Matrix G = gate_means(preactivations(params.W, inst), inst);
  return weighted_gram(inst.V, G.rowwise().squaredNorm());
}

Matrix jacobian_difference_gram(const GeneratorParams& params, const GeneratorParams& ref,
                                const ProblemInstance& inst) {
  check_params(params, inst);
  check_params(ref, inst);
  const Matrix delta = gate_means(preactivations(params.W, inst), inst) -
                       gate_means(preactivations(ref.W, inst), inst);
  return weighted_gram(inst.V, delta.rowwise().squaredNorm());
}

double minmax_value(const GeneratorParams& params, const Vector& dvec,
                    const ProblemInstance& inst) {
  check_dvec(dvec, inst);
  const Vector gap = inst.xbar - generator_forward(params, inst);
  return dvec.dot(gap) - 0.5 * dvec.squaredNorm();
}

double meta_value(const GeneratorParams& params, const Vector& dvec,
                  const ProblemInstance& inst) {
  check_dvec(dvec, inst);
  return dvec.dot(residual(params, inst)) - 0.5 * dvec.squaredNorm();
}

MinmaxGradients minmax_gradients(const GeneratorParams& params, const Vector& dvec,
                                 const ProblemInstance& inst) {
  check_params(params, inst);
  check_dvec(dvec, inst);
  const Matrix H = preactivations(params.W, inst);
  const Vector f = inst.V * hidden_means(H);
  const Matrix G = gate_means(H, inst);
  MinmaxGradients out;
  out.grad_d = (inst.xbar - f) - dvec;
  // d/dW of -<d, f(W)> is -J^T d; row l of J^T d is (V^T d)_l G(l, :).
  out.grad_W = -((inst.V.transpose() * dvec).asDiagonal() * G);
  return out;
}

GeneratorMap::GeneratorMap(std::shared_ptr<const ProblemInstance> inst) : inst_(std::move(inst)) {
  if (!inst_) throw std::invalid_argument("GeneratorMap needs an instance");
}

Eigen::Index GeneratorMap::param_count() const {
  return static_cast<Eigen::Index>(inst_->k()) * inst_->d();
}

Eigen::Index GeneratorMap::output_dim() const { return inst_->m(); }

Vector GeneratorMap::initial_theta() const { return GeneratorParams{inst_->W0}.flatten(); }

Vector GeneratorMap::evaluate(const Vector& theta) const {
  check_param(theta);
  Scratch& s = scratch();
  forward_into(theta, *inst_, s);
  return inst_->V * s.hidden;
}

Matrix GeneratorMap::jacobian(const Vector& theta) const {
  check_param(theta);
  return gdalab::jacobian(GeneratorParams::unflatten(theta, inst_->k(), inst_->d()), *inst_).J;
}

Vector GeneratorMap::jacobian_transpose_times(const Vector& theta, const Vector& v) const {
  check_param(theta);
  check_output(v);
  Scratch& s = scratch();
  forward_into(theta, *inst_, s);
  Vector out;
  scaled_gate_means_into(*inst_, inst_->V.transpose() * v, s, out);
  return out;
}

Vector GeneratorMap::jacobian_times(const Vector& theta, const Vector& direction) const {
  check_param(theta);
  check_param(direction);
  const Eigen::Map<const RowMajorMatrix> W(theta.data(), inst_->k(), inst_->d());
  const Eigen::Map<const RowMajorMatrix> dW(direction.data(), inst_->k(), inst_->d());
  const Matrix G = gate_means(preactivations(W, *inst_), *inst_);
  const Vector per_unit = G.cwiseProduct(dW).rowwise().sum();
  return inst_->V * per_unit;
}

Matrix GeneratorMap::jacobian_gram(const Vector& theta) const {
  check_param(theta);
  return gdalab::jacobian_gram(GeneratorParams::unflatten(theta, inst_->k(), inst_->d()), *inst_);
}

Matrix GeneratorMap::jacobian_difference_gram(const Vector& theta, const Vector& ref) const {
  check_param(theta);
  check_param(ref);
  return gdalab::jacobian_difference_gram(
      GeneratorParams::unflatten(theta, inst_->k(), inst_->d()),
      GeneratorParams::unflatten(ref, inst_->k(), inst_->d()), *inst_);
}

void GeneratorMap::value_and_vjp(const Vector& theta, const Vector& v, Vector& value,
                                 Vector& vjp) const {
  check_param(theta);
  check_output(v);
  Scratch& s = scratch();
  forward_into(theta, *inst_, s);
  value.resize(inst_->m());
  value.noalias() = inst_->V * s.hidden;
  scaled_gate_means_into(*inst_, inst_->V.transpose() * v, s, vjp);
}

void GeneratorMap::value_and_residual_vjp(const Vector& theta, const Vector& y, Vector& value,
                                          Vector& vjp) const {
  check_param(theta);
  check_output(y);
  Scratch& s = scratch();
  forward_into(theta, *inst_, s);
  value.resize(inst_->m());
  value.noalias() = inst_->V * s.hidden;
  scaled_gate_means_into(*inst_, inst_->V.transpose() * (value - y), s, vjp);
}

}  // namespace gdalab
