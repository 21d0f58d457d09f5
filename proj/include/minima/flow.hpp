#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "minima/branches.hpp"
#include "minima/network.hpp"
#include "minima/rng.hpp"

namespace minima {

/// A vector field given by a loss and its gradient; the flow follows the
/// negative gradient.
class GradientField {
 public:
  virtual ~GradientField() = default;
  virtual int dim() const = 0;
  /// Writes the gradient into grad (already sized) and returns the loss.
  virtual double eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const = 0;
};

/// Field backed by a LossContext; shares the gradient kernel with grad() so
/// the integrator's field is bitwise the network gradient.
class LossField final : public GradientField {
 public:
  explicit LossField(const LossContext& ctx, int m);
  int dim() const override { return (ctx_->d() + 1) * m_; }
  double eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override;

 private:
  const LossContext* ctx_;
  int m_;
  mutable std::vector<double> work_;
};

// Self-test fixtures.
class QuadraticField final : public GradientField {  // R = |x|^2
 public:
  explicit QuadraticField(int d) : d_(d) {}
  int dim() const override { return d_; }
  double eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override;

 private:
  int d_;
};

class CubicField final : public GradientField {  // R = sum x_i^4 / 4, xdot = -x^3
 public:
  explicit CubicField(int d) : d_(d) {}
  int dim() const override { return d_; }
  double eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override;

 private:
  int d_;
};

class XYQuarticField final : public GradientField {  // R(x, y, z) = x^2 + y^4 + 0 z
 public:
  int dim() const override { return 3; }
  double eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const override;
};

struct IntegrateOpts {
  double grad_tol = 1e-10;
  double t_max = 1e6;
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double stop_loss = 0.0;  // > 0 enables the loss-floor early stop
  double max_state_norm = 1e6;
  int t_checkpoints_per_decade = 16;
  int loss_checkpoints_per_decade = 24;
  long max_steps = 400000000L;
};

enum class Terminal { Converged, MaxTime, Diverged, LossFloor };

struct IntegratorStats {
  long steps = 0;
  long rejected = 0;
  long rhs_evals = 0;
  double final_h = 0.0;
  bool step_underflow = false;
};

struct FlowTrace {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;
  std::vector<double> losses;
  std::vector<double> grad_norms;
  Terminal terminal = Terminal::MaxTime;
  Eigen::VectorXd theta_lim;
  IntegratorStats stats;

  int checkpoints() const { return static_cast<int>(times.size()); }
};

/// Adaptive Dormand-Prince 5(4) on xdot = -grad R, with checkpoints stored
/// geometrically in both t and loss. Converged means grad_norm <= grad_tol.
FlowTrace integrate(const Eigen::VectorXd& theta0, const GradientField& field,
                    const IntegrateOpts& opts = {});
FlowTrace integrate(const ParamVector& theta0, const LossContext& ctx,
                    const IntegrateOpts& opts = {});

/// Resume integration from the trace terminal, appending checkpoints. t_max in
/// opts is the new absolute horizon.
FlowTrace integrate_more(FlowTrace trace, const GradientField& field, const IntegrateOpts& opts);

struct PolishResult {
  ParamVector theta;
  double loss = 0.0;
  int iters = 0;
  bool converged = false;
};

/// Levenberg-Marquardt refinement of a near-zero of the residuals; extracts
/// the exact zero-set point a truncated flow is heading to. Local: steps stay
/// on the zero-set piece next to the input.
PolishResult polish_to_zero(const ParamVector& theta, const LossContext& ctx,
                            double target_loss = 1e-24, int max_iters = 100);

struct SubspaceSplit {
  Eigen::MatrixXd basis_s;  // sharp directions: eigenvalue > tau_s * lambda_max
  Eigen::MatrixXd basis_c;  // center: flat but not branch-tangent
  Eigen::MatrixXd basis_p;  // branch tangent (analytic)
  Eigen::VectorXd eigenvalues;
};

struct AmbiguousSplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Split from an explicit Hessian and an analytic flat-subspace basis.
SubspaceSplit subspace_split_from(const Eigen::MatrixXd& hessian, const Eigen::MatrixXd& basis_p,
                                  double tau_s);

/// Split at a zero-loss branch point: V_p is the analytic branch tangent, V_s
/// the sharp Gauss-Newton eigenspace, V_c the rest.
SubspaceSplit subspace_split(const ParamVector& theta_star, const Branch& branch,
                             const LossContext& ctx, double tau_s = 1e-6);

struct RateVerdict {
  enum class Kind { Linear, Sublinear, Undetermined };
  Kind kind = Kind::Undetermined;
  double rate = 0.0;   // Linear: beta in e^{-beta t}
  double power = 0.0;  // Sublinear: p in t^p
  double r2 = 0.0;
  double window_t0 = 0.0;
  double window_t1 = 0.0;
  int window_points = 0;
};

/// Competing fits of log-distance against t (linear) and log t (power) over
/// the final decade of distance decay.
RateVerdict estimate_rate(const FlowTrace& trace, const Eigen::VectorXd& theta_lim);
RateVerdict estimate_rate(const FlowTrace& trace);

struct DirectionReport {
  std::vector<double> times;
  std::vector<double> comp_s, comp_c, comp_p;  // |pi_x (gamma - theta*)|
  double sup_rho_pss = 0.0;                    // |pi_p| / |pi_s|^2 over the window
  double med_rho_pss = 0.0;
  double sup_rho_ps = 0.0;  // |pi_p| / |pi_s|
  double sup_rho_sc2 = 0.0;  // |pi_s| / |pi_c|^2
  double med_rho_sc2 = 0.0;
  bool s_active = false, c_active = false, p_active = false;
  int window_points = 0;
};

DirectionReport direction_diagnostics(const FlowTrace& trace, const SubspaceSplit& split);

struct LossDecayOpts {
  // Explicit distance window [lo, hi] for the fits; 0 means the automatic
  // final-decade window.
  double window_lo = 0.0;
  double window_hi = 0.0;
  int min_points = 10;
};

struct LossDecayReport {
  double loglog_exponent = 0.0;  // slope of log R vs log dist
  double loglog_r2 = 0.0;
  double linear_r2 = 0.0;  // of log R vs t
  double linear_rate = 0.0;
  double c_dist4 = 0.0;  // nonneg LS fit R ~ c1 dist^4 + c2 e^{-beta t}
  double c_exp = 0.0;
  double beta = 0.0;
  double fit_residual = 0.0;
  int window_points = 0;
};

LossDecayReport loss_decay_check(const FlowTrace& trace, const Eigen::VectorXd& theta_lim,
                                 const LossDecayOpts& opts = {});

struct StabilityOpts {
  double sup_tol = 1e-6;
  double min_converged_fraction = 0.95;
  double zero_loss_tol = 1e-8;  // MaxTime terminals above this never count as converged
  bool polish = true;
  IntegrateOpts flow;
};

struct StabilityReport {
  enum class Verdict { Stable, Unstable };
  Verdict verdict = Verdict::Unstable;
  int trials = 0;
  int converged = 0;
  double worst_sup = 0.0;
  std::optional<ParamVector> witness;
  bool insufficient_convergence = false;
};

/// Generalization stability probe: flows from B(theta*, delta), comparing the
/// limit's function with g(theta*, .) on the probe grid.
StabilityReport stability_probe(const ParamVector& theta_star, const LossContext& ctx, double delta,
                                int trials, const std::vector<Eigen::VectorXd>& probe_grid, Rng& rng,
                                const StabilityOpts& opts = {});

std::vector<Eigen::VectorXd> default_probe_grid(int d, int count, std::uint64_t seed, double box = 1.0);

// Least-squares helpers shared by the diagnostics and the tests.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int n = 0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace minima
