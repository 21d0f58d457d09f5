#pragma once

#include <vector>

#include <Eigen/Core>

#include "minima/activation.hpp"

namespace minima {

/// Student parameters theta = (a_1, w_1, ..., a_m, w_m), stored flat with the
/// block layout [a_k, w_k] of stride d+1.
struct ParamVector {
  int m = 0;
  int d = 0;
  Eigen::VectorXd entries;

  static ParamVector zeros(int m, int d);
  static ParamVector from_entries(int m, int d, Eigen::VectorXd entries);

  int size() const { return (d + 1) * m; }
  double a(int k) const { return entries[k * (d + 1)]; }
  double& a(int k) { return entries[k * (d + 1)]; }
  Eigen::VectorBlock<const Eigen::VectorXd> w(int k) const {
    return entries.segment(k * (d + 1) + 1, d);
  }
  Eigen::VectorBlock<Eigen::VectorXd> w(int k) { return entries.segment(k * (d + 1) + 1, d); }

  void validate() const;
};

/// Width-m0 teacher with nonzero outer coefficients and pairwise distinct
/// weights.
struct TargetNetwork {
  int m0 = 0;
  int d = 0;
  Eigen::VectorXd bar_a;
  std::vector<Eigen::VectorXd> bar_w;

  double min_weight_gap() const;
  void validate() const;
};

/// Everything needed to evaluate the empirical loss: teacher, samples, cached
/// labels, activation. Immutable after construction.
struct LossContext {
  TargetNetwork target;
  std::vector<Eigen::VectorXd> samples;
  Eigen::VectorXd labels;
  ActivationSpec activation;

  static LossContext make(TargetNetwork target, std::vector<Eigen::VectorXd> samples,
                          ActivationSpec activation);

  int n() const { return static_cast<int>(samples.size()); }
  int d() const { return target.d; }
};

double forward(const ParamVector& theta, const Eigen::VectorXd& x, const ActivationSpec& act);
double target_forward(const TargetNetwork& target, const Eigen::VectorXd& x,
                      const ActivationSpec& act);

/// Empirical L2 loss sum_i (g(theta, x_i) - f*(x_i))^2.
double loss(const ParamVector& theta, const LossContext& ctx);

/// +grad R; the flow module applies the minus sign.
Eigen::VectorXd grad(const ParamVector& theta, const LossContext& ctx);

/// Residuals r_i = g(theta, x_i) - f*(x_i).
Eigen::VectorXd residuals(const ParamVector& theta, const LossContext& ctx);

/// Rows h_i = grad_theta g(theta, x_i); the Gauss-Newton factor.
Eigen::MatrixXd model_jacobian(const ParamVector& theta, const LossContext& ctx);

/// Exact analytic Hessian 2 sum_i [h_i h_i^T + r_i Hess g_i], symmetrized.
Eigen::MatrixXd hessian_full(const ParamVector& theta, const LossContext& ctx);

/// Gauss-Newton form 2 sum_i h_i h_i^T; PSD, equals the full Hessian at
/// zero-residual points.
Eigen::MatrixXd hessian_gn(const ParamVector& theta, const LossContext& ctx);

namespace detail {
// Allocation-free kernel shared by grad() and the flow integrator, so the
// integrator's vector field matches grad bitwise. Returns the loss. work must
// hold at least n entries.
double loss_grad_kernel(const double* theta, int m, int d, const LossContext& ctx, double* grad_out,
                        double* work);
}  // namespace detail

}  // namespace minima
