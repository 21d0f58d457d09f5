#include "minima/network.hpp"

#include <cmath>
#include <stdexcept>

namespace minima {

ParamVector ParamVector::zeros(int m, int d) {
  ParamVector p;
  p.m = m;
  p.d = d;
  p.entries = Eigen::VectorXd::Zero((d + 1) * m);
  return p;
}

ParamVector ParamVector::from_entries(int m, int d, Eigen::VectorXd entries) {
  ParamVector p;
  p.m = m;
  p.d = d;
  p.entries = std::move(entries);
  p.validate();
  return p;
}

void ParamVector::validate() const {
  if (m < 1 || d < 1) throw std::invalid_argument("ParamVector: m >= 1 and d >= 1 required");
  if (entries.size() != static_cast<Eigen::Index>((d + 1) * m))
    throw std::invalid_argument("ParamVector: entries length must be (d+1)*m");
  if (!entries.allFinite()) throw std::invalid_argument("ParamVector: entries must be finite");
}

double TargetNetwork::min_weight_gap() const {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bar_w.size(); ++i)
    for (std::size_t j = i + 1; j < bar_w.size(); ++j)
      gap = std::min(gap, (bar_w[i] - bar_w[j]).norm());
  return gap;
}

void TargetNetwork::validate() const {
  if (m0 < 1 || d < 1) throw std::invalid_argument("TargetNetwork: m0 >= 1 and d >= 1 required");
  if (bar_a.size() != m0 || static_cast<int>(bar_w.size()) != m0)
    throw std::invalid_argument("TargetNetwork: m0 coefficients and weights required");
  for (int k = 0; k < m0; ++k) {
    if (bar_a[k] == 0.0 || !std::isfinite(bar_a[k]))
      throw std::invalid_argument("TargetNetwork: outer coefficients must be finite and nonzero");
    if (bar_w[k].size() != d) throw std::invalid_argument("TargetNetwork: weight dimension mismatch");
  }
  if (m0 > 1 && min_weight_gap() <= 0.0)
    throw std::invalid_argument("TargetNetwork: weights must be pairwise distinct");
}

LossContext LossContext::make(TargetNetwork target, std::vector<Eigen::VectorXd> samples,
                              ActivationSpec activation) {
  target.validate();
  activation.validate();
  LossContext ctx;
  ctx.target = std::move(target);
  ctx.activation = std::move(activation);
  ctx.labels.resize(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != ctx.target.d)
      throw std::invalid_argument("LossContext: sample dimension mismatch");
    ctx.labels[static_cast<Eigen::Index>(i)] = target_forward(ctx.target, samples[i], ctx.activation);
  }
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j)
      if ((samples[i] - samples[j]).norm() <= 1e-12)
        throw std::invalid_argument("LossContext: samples must be pairwise distinct");
  ctx.samples = std::move(samples);
  return ctx;
}

double forward(const ParamVector& theta, const Eigen::VectorXd& x, const ActivationSpec& act) {
  if (x.size() != theta.d) throw std::invalid_argument("forward: input dimension mismatch");
  double out = 0.0;
  for (int k = 0; k < theta.m; ++k) out += theta.a(k) * act.eval(theta.w(k).dot(x));
  if (!std::isfinite(out)) throw NumericsError("forward: non-finite output");
  return out;
}

double target_forward(const TargetNetwork& target, const Eigen::VectorXd& x,
                      const ActivationSpec& act) {
  double out = 0.0;
  for (int k = 0; k < target.m0; ++k) out += target.bar_a[k] * act.eval(target.bar_w[k].dot(x));
  if (!std::isfinite(out)) throw NumericsError("target_forward: non-finite output");
  return out;
}

namespace detail {

double loss_grad_kernel(const double* theta, int m, int d, const LossContext& ctx, double* grad_out,
                        double* work) {
  const int stride = d + 1;
  const int n = ctx.n();
  const ActivationSpec& act = ctx.activation;
  double* r = work;
  double L = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& x = ctx.samples[static_cast<std::size_t>(i)];
    double gi = 0.0;
    for (int k = 0; k < m; ++k) {
      double z = 0.0;
      const double* wk = theta + k * stride + 1;
      for (int t = 0; t < d; ++t) z += wk[t] * x[t];
      gi += theta[k * stride] * act.eval(z);
    }
    r[i] = gi - ctx.labels[i];
    L += r[i] * r[i];
  }
  if (grad_out != nullptr) {
    for (int j = 0; j < stride * m; ++j) grad_out[j] = 0.0;
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd& x = ctx.samples[static_cast<std::size_t>(i)];
      double two_r = 2.0 * r[i];
      for (int k = 0; k < m; ++k) {
        double z = 0.0;
        const double* wk = theta + k * stride + 1;
        for (int t = 0; t < d; ++t) z += wk[t] * x[t];
        grad_out[k * stride] += two_r * act.eval(z);
        double c = two_r * theta[k * stride] * act.d1(z);
        for (int t = 0; t < d; ++t) grad_out[k * stride + 1 + t] += c * x[t];
      }
    }
  }
  return L;
}

}  // namespace detail

double loss(const ParamVector& theta, const LossContext& ctx) {
  std::vector<double> work(static_cast<std::size_t>(ctx.n()));
  double L = detail::loss_grad_kernel(theta.entries.data(), theta.m, theta.d, ctx, nullptr,
                                      work.data());
  if (!std::isfinite(L)) throw NumericsError("loss: non-finite value");
  return L;
}

Eigen::VectorXd grad(const ParamVector& theta, const LossContext& ctx) {
  Eigen::VectorXd g(theta.size());
  std::vector<double> work(static_cast<std::size_t>(ctx.n()));
  detail::loss_grad_kernel(theta.entries.data(), theta.m, theta.d, ctx, g.data(), work.data());
  if (!g.allFinite()) throw NumericsError("grad: non-finite value");
  return g;
}

Eigen::VectorXd residuals(const ParamVector& theta, const LossContext& ctx) {
  Eigen::VectorXd r(ctx.n());
  for (int i = 0; i < ctx.n(); ++i)
    r[i] = forward(theta, ctx.samples[static_cast<std::size_t>(i)], ctx.activation) - ctx.labels[i];
  return r;
}

Eigen::MatrixXd model_jacobian(const ParamVector& theta, const LossContext& ctx) {
  const int n = ctx.n();
  const int d = theta.d;
  Eigen::MatrixXd J(n, theta.size());
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& x = ctx.samples[static_cast<std::size_t>(i)];
    for (int k = 0; k < theta.m; ++k) {
      double z = theta.w(k).dot(x);
      J(i, k * (d + 1)) = ctx.activation.eval(z);
      double c = theta.a(k) * ctx.activation.d1(z);
      for (int t = 0; t < d; ++t) J(i, k * (d + 1) + 1 + t) = c * x[t];
    }
  }
  return J;
}

Eigen::MatrixXd hessian_gn(const ParamVector& theta, const LossContext& ctx) {
  Eigen::MatrixXd J = model_jacobian(theta, ctx);
  return 2.0 * J.transpose() * J;
}

Eigen::MatrixXd hessian_full(const ParamVector& theta, const LossContext& ctx) {
  const int d = theta.d;
  const int dim = theta.size();
  Eigen::MatrixXd H = hessian_gn(theta, ctx);
  Eigen::VectorXd r = residuals(theta, ctx);
  // Residual term 2 sum_i r_i Hess g_i; Hess g_i is block diagonal per neuron
  // with the [a_k, w_k] coupling.
  for (int i = 0; i < ctx.n(); ++i) {
    const Eigen::VectorXd& x = ctx.samples[static_cast<std::size_t>(i)];
    for (int k = 0; k < theta.m; ++k) {
      double z = theta.w(k).dot(x);
      double s1 = ctx.activation.d1(z);
      double s2 = ctx.activation.d2(z);
      int ia = k * (d + 1);
      for (int t = 0; t < d; ++t) {
        double cross = 2.0 * r[i] * s1 * x[t];
        H(ia, ia + 1 + t) += cross;
        H(ia + 1 + t, ia) += cross;
        for (int u = 0; u < d; ++u) H(ia + 1 + t, ia + 1 + u) += 2.0 * r[i] * theta.a(k) * s2 * x[t] * x[u];
      }
    }
  }
  // Symmetrized storage.
  Eigen::MatrixXd Hs = 0.5 * (H + H.transpose());
  if (!Hs.allFinite()) throw NumericsError("hessian_full: non-finite value");
  (void)dim;
  return Hs;
}

}  // namespace minima
