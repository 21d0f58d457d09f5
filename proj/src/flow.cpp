#include "minima/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace minima {

LossField::LossField(const LossContext& ctx, int m)
    : ctx_(&ctx), m_(m), work_(static_cast<std::size_t>(ctx.n())) {}

double LossField::eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  return detail::loss_grad_kernel(x.data(), m_, ctx_->d(), *ctx_, grad.data(), work_.data());
}

double QuadraticField::eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  grad = 2.0 * x;
  return x.squaredNorm();
}

double CubicField::eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  double loss = 0.0;
  for (int i = 0; i < d_; ++i) {
    double q = x[i] * x[i];
    loss += 0.25 * q * q;
    grad[i] = x[i] * q;
  }
  return loss;
}

double XYQuarticField::eval(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  grad[0] = 2.0 * x[0];
  grad[1] = 4.0 * x[1] * x[1] * x[1];
  grad[2] = 0.0;
  return x[0] * x[0] + x[1] * x[1] * x[1] * x[1];
}

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9;
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561,
                 A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784,
                 B6 = 11.0 / 84;
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200,
                 E6 = 22.0 / 525, E7 = -1.0 / 40;

struct Checkpointer {
  double next_t = 0.0;
  double next_loss = std::numeric_limits<double>::infinity();
  double t_factor;
  double loss_factor;

  Checkpointer(const IntegrateOpts& opts)
      : t_factor(std::pow(10.0, 1.0 / opts.t_checkpoints_per_decade)),
        loss_factor(std::pow(10.0, -1.0 / opts.loss_checkpoints_per_decade)) {}

  bool due(double t, double loss) const { return t >= next_t || loss <= next_loss; }

  void arm(double t, double loss) {
    next_t = (t <= 0.0) ? 1e-6 : t * t_factor;
    next_loss = (loss > 0.0) ? loss * loss_factor : -1.0;
  }
};

void record(FlowTrace& trace, double t, const Eigen::VectorXd& y, double loss, double gnorm) {
  trace.times.push_back(t);
  trace.states.push_back(y);
  trace.losses.push_back(loss);
  trace.grad_norms.push_back(gnorm);
}

}  // namespace

FlowTrace integrate(const Eigen::VectorXd& theta0, const GradientField& field,
                    const IntegrateOpts& opts) {
  const int n = field.dim();
  if (theta0.size() != n) throw std::invalid_argument("integrate: initial state dimension mismatch");

  FlowTrace trace;
  Eigen::VectorXd y = theta0;
  Eigen::VectorXd k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n), yerr(n),
      gtmp(n);
  IntegratorStats& st = trace.stats;

  double t = 0.0;
  double loss = field.eval(y, gtmp);
  ++st.rhs_evals;
  k1 = -gtmp;
  double gnorm = gtmp.norm();
  record(trace, t, y, loss, gnorm);
  Checkpointer ckpt(opts);
  ckpt.arm(t, loss);

  auto finish = [&](Terminal term) {
    trace.terminal = term;
    trace.theta_lim = y;
    if (trace.times.back() != t) record(trace, t, y, loss, gnorm);
    st.final_h = 0.0;
    return trace;
  };

  if (gnorm <= opts.grad_tol) return finish(Terminal::Converged);
  if (opts.stop_loss > 0.0 && loss <= opts.stop_loss) return finish(Terminal::LossFloor);

  // Initial step from the gradient scale.
  double h = 0.01 / std::max(gnorm, 1e-8);
  h = std::min(h, opts.t_max / 10.0);
  double err_prev = 1.0;

  while (true) {
    if (st.steps >= opts.max_steps) return finish(Terminal::MaxTime);
    if (t + h > opts.t_max) h = opts.t_max - t;
    if (h <= 1e-14 * std::max(1.0, t)) {
      st.step_underflow = true;
      return finish(Terminal::MaxTime);
    }

    ytmp = y + h * (A21 * k1);
    field.eval(ytmp, gtmp);
    k2 = -gtmp;
    ytmp = y + h * (A31 * k1 + A32 * k2);
    field.eval(ytmp, gtmp);
    k3 = -gtmp;
    ytmp = y + h * (A41 * k1 + A42 * k2 + A43 * k3);
    field.eval(ytmp, gtmp);
    k4 = -gtmp;
    ytmp = y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4);
    field.eval(ytmp, gtmp);
    k5 = -gtmp;
    ytmp = y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5);
    field.eval(ytmp, gtmp);
    k6 = -gtmp;
    ynew = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
    double loss_new = field.eval(ynew, gtmp);
    k7 = -gtmp;
    st.rhs_evals += 6;

    yerr = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
    double err = 0.0;
    bool finite = ynew.allFinite() && std::isfinite(loss_new);
    if (finite) {
      for (int i = 0; i < n; ++i) {
        double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(y[i]), std::abs(ynew[i]));
        double e = yerr[i] / sc;
        err += e * e;
      }
      err = std::sqrt(err / n);
    } else {
      err = 1e10;
    }

    if (err <= 1.0) {
      t += h;
      y = ynew;
      k1 = k7;  // FSAL
      loss = loss_new;
      gnorm = gtmp.norm();
      ++st.steps;

      if (!finite || y.norm() > opts.max_state_norm) return finish(Terminal::Diverged);
      if (ckpt.due(t, loss)) {
        record(trace, t, y, loss, gnorm);
        ckpt.arm(t, loss);
      }
      if (gnorm <= opts.grad_tol) return finish(Terminal::Converged);
      if (opts.stop_loss > 0.0 && loss <= opts.stop_loss) return finish(Terminal::LossFloor);
      if (t >= opts.t_max) return finish(Terminal::MaxTime);

      // PI controller.
      double fac = 0.9 * std::pow(std::max(err, 1e-10), -0.7 / 5.0) * std::pow(err_prev, 0.4 / 5.0);
      fac = std::clamp(fac, 0.2, 6.0);
      h *= fac;
      err_prev = std::max(err, 1e-10);
    } else {
      ++st.rejected;
      h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
    }
  }
}

FlowTrace integrate(const ParamVector& theta0, const LossContext& ctx, const IntegrateOpts& opts) {
  theta0.validate();
  LossField field(ctx, theta0.m);
  return integrate(theta0.entries, field, opts);
}

FlowTrace integrate_more(FlowTrace trace, const GradientField& field, const IntegrateOpts& opts) {
  double t0 = trace.times.back();
  if (t0 >= opts.t_max || trace.terminal == Terminal::Converged ||
      trace.terminal == Terminal::Diverged || trace.terminal == Terminal::LossFloor)
    return trace;
  IntegrateOpts shifted = opts;
  shifted.t_max = opts.t_max - t0;
  FlowTrace cont = integrate(trace.theta_lim, field, shifted);
  for (int i = 1; i < cont.checkpoints(); ++i) {
    trace.times.push_back(cont.times[static_cast<std::size_t>(i)] + t0);
    trace.states.push_back(cont.states[static_cast<std::size_t>(i)]);
    trace.losses.push_back(cont.losses[static_cast<std::size_t>(i)]);
    trace.grad_norms.push_back(cont.grad_norms[static_cast<std::size_t>(i)]);
  }
  trace.terminal = cont.terminal;
  trace.theta_lim = cont.theta_lim;
  trace.stats.steps += cont.stats.steps;
  trace.stats.rejected += cont.stats.rejected;
  trace.stats.rhs_evals += cont.stats.rhs_evals;
  trace.stats.step_underflow |= cont.stats.step_underflow;
  return trace;
}

PolishResult polish_to_zero(const ParamVector& theta, const LossContext& ctx, double target_loss,
                            int max_iters) {
  PolishResult out;
  out.theta = theta;
  double lambda = 1e-8;
  Eigen::VectorXd r = residuals(out.theta, ctx);
  double L = r.squaredNorm();
  for (out.iters = 0; out.iters < max_iters; ++out.iters) {
    if (L <= target_loss) {
      out.converged = true;
      break;
    }
    Eigen::MatrixXd J = model_jacobian(out.theta, ctx);
    Eigen::MatrixXd JtJ = J.transpose() * J;
    Eigen::VectorXd Jtr = J.transpose() * r;
    bool improved = false;
    for (int inner = 0; inner < 24; ++inner) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal().array() += lambda * (JtJ.diagonal().array().maxCoeff() + 1e-30);
      Eigen::VectorXd step = A.ldlt().solve(Jtr);
      ParamVector cand = out.theta;
      cand.entries -= step;
      Eigen::VectorXd rc;
      double Lc = std::numeric_limits<double>::infinity();
      try {
        rc = residuals(cand, ctx);
        Lc = rc.squaredNorm();
      } catch (const NumericsError&) {
      }
      if (Lc < L) {
        out.theta = cand;
        r = rc;
        L = Lc;
        lambda = std::max(lambda * 0.3, 1e-14);
        improved = true;
        break;
      }
      lambda *= 8.0;
      if (lambda > 1e12) break;
    }
    if (!improved) break;
  }
  out.loss = L;
  out.converged = L <= target_loss;
  return out;
}

SubspaceSplit subspace_split_from(const Eigen::MatrixXd& hessian, const Eigen::MatrixXd& basis_p,
                                  double tau_s) {
  const int n = static_cast<int>(hessian.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian);
  Eigen::VectorXd evals = eig.eigenvalues();
  double lam_max = std::max(evals.cwiseAbs().maxCoeff(), 1e-300);
  double cut = tau_s * lam_max;
  for (int i = 0; i < n; ++i) {
    double lam = std::abs(evals[i]);
    if (lam > cut / 10.0 && lam < cut * 10.0)
      throw AmbiguousSplitError("subspace_split: eigenvalue within a decade of the cut");
  }
  std::vector<int> sharp;
  for (int i = 0; i < n; ++i)
    if (std::abs(evals[i]) > cut) sharp.push_back(i);

  Eigen::MatrixXd Vs(n, sharp.size());
  for (std::size_t j = 0; j < sharp.size(); ++j) Vs.col(static_cast<Eigen::Index>(j)) = eig.eigenvectors().col(sharp[j]);

  // Re-orthogonalize the sharp directions against the analytic flat basis.
  SubspaceSplit split;
  split.eigenvalues = evals;
  split.basis_p = basis_p;
  if (Vs.cols() > 0 && basis_p.cols() > 0) {
    Vs -= basis_p * (basis_p.transpose() * Vs);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Vs);
    Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n, Vs.cols());
    split.basis_s = Q;
  } else {
    split.basis_s = Vs;
  }
  // Complement of span(s) + span(p).
  Eigen::MatrixXd SP(n, split.basis_s.cols() + basis_p.cols());
  SP << split.basis_s, basis_p;
  Eigen::FullPivHouseholderQR<Eigen::MatrixXd> qr2(SP);
  Eigen::MatrixXd Qfull = qr2.matrixQ();
  split.basis_c = Qfull.rightCols(n - SP.cols());
  return split;
}

SubspaceSplit subspace_split(const ParamVector& theta_star, const Branch& branch,
                             const LossContext& ctx, double tau_s) {
  Eigen::MatrixXd H = hessian_gn(theta_star, ctx);
  Eigen::MatrixXd Vp = branch_tangent_basis(branch);
  return subspace_split_from(H, Vp, tau_s);
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit f;
  f.n = static_cast<int>(x.size());
  if (f.n < 2 || x.size() != y.size()) return f;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
    syy += y[i] * y[i];
  }
  double nn = static_cast<double>(f.n);
  double den = nn * sxx - sx * sx;
  if (std::abs(den) < 1e-300) return f;
  f.slope = (nn * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / nn;
  double ss_tot = syy - sy * sy / nn;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
  }
  f.r2 = (ss_tot > 1e-300) ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

namespace {

struct TailWindow {
  std::vector<int> idx;
  double d_lo = 0.0, d_hi = 0.0;
};

// Final decade of distance decay: pick [d_lo, 10 d_lo] above the terminal
// resolution floor, sliding up one decade if too sparse.
TailWindow tail_window(const std::vector<double>& dist, int min_points) {
  TailWindow w;
  const int n = static_cast<int>(dist.size());
  if (n < 3) return w;
  double floor_scale = 0.0;
  for (int i = std::max(0, n - 4); i < n; ++i) floor_scale = std::max(floor_scale, dist[static_cast<std::size_t>(i)]);
  floor_scale = std::max(floor_scale, 1e-300);
  for (double mult : {30.0, 100.0, 300.0, 1000.0}) {
    double lo = std::max(mult * floor_scale, 1e-12);
    double hi = 10.0 * lo;
    w.idx.clear();
    for (int i = 0; i < n; ++i)
      if (dist[static_cast<std::size_t>(i)] >= lo && dist[static_cast<std::size_t>(i)] <= hi) w.idx.push_back(i);
    if (static_cast<int>(w.idx.size()) >= min_points) {
      w.d_lo = lo;
      w.d_hi = hi;
      return w;
    }
  }
  w.idx.clear();
  return w;
}

std::vector<double> distances(const FlowTrace& trace, const Eigen::VectorXd& theta_lim) {
  std::vector<double> d;
  d.reserve(trace.states.size());
  for (const auto& s : trace.states) d.push_back((s - theta_lim).norm());
  return d;
}

}  // namespace

RateVerdict estimate_rate(const FlowTrace& trace, const Eigen::VectorXd& theta_lim) {
  RateVerdict verdict;
  if (trace.terminal != Terminal::Converged && trace.terminal != Terminal::LossFloor)
    return verdict;
  std::vector<double> dist = distances(trace, theta_lim);
  TailWindow w = tail_window(dist, 10);
  verdict.window_points = static_cast<int>(w.idx.size());
  if (w.idx.size() < 10) return verdict;

  std::vector<double> ts, lts, lds;
  for (int i : w.idx) {
    double t = trace.times[static_cast<std::size_t>(i)];
    if (t <= 0.0) continue;
    ts.push_back(t);
    lts.push_back(std::log(t));
    lds.push_back(std::log(dist[static_cast<std::size_t>(i)]));
  }
  if (ts.size() < 10) return verdict;
  verdict.window_t0 = ts.front();
  verdict.window_t1 = ts.back();

  LineFit lin = fit_line(ts, lds);
  LineFit pow = fit_line(lts, lds);
  if (lin.r2 >= pow.r2 && lin.r2 >= 0.99 && lin.slope < 0.0) {
    verdict.kind = RateVerdict::Kind::Linear;
    verdict.rate = -lin.slope;
    verdict.r2 = lin.r2;
  } else if (pow.r2 > lin.r2 && pow.r2 >= 0.99 && pow.slope < 0.0) {
    verdict.kind = RateVerdict::Kind::Sublinear;
    verdict.power = pow.slope;
    verdict.r2 = pow.r2;
  } else {
    verdict.r2 = std::max(lin.r2, pow.r2);
  }
  return verdict;
}

RateVerdict estimate_rate(const FlowTrace& trace) { return estimate_rate(trace, trace.theta_lim); }

DirectionReport direction_diagnostics(const FlowTrace& trace, const SubspaceSplit& split) {
  DirectionReport rep;
  const Eigen::VectorXd& lim = trace.theta_lim;
  std::vector<double> dist = distances(trace, lim);
  for (int i = 0; i < trace.checkpoints(); ++i) {
    Eigen::VectorXd delta = trace.states[static_cast<std::size_t>(i)] - lim;
    rep.times.push_back(trace.times[static_cast<std::size_t>(i)]);
    rep.comp_s.push_back(split.basis_s.cols() > 0 ? (split.basis_s.transpose() * delta).norm() : 0.0);
    rep.comp_c.push_back(split.basis_c.cols() > 0 ? (split.basis_c.transpose() * delta).norm() : 0.0);
    rep.comp_p.push_back(split.basis_p.cols() > 0 ? (split.basis_p.transpose() * delta).norm() : 0.0);
  }
  const double denom_floor = 1e-14;
  double cmax = 0.0, smax = 0.0, pmax = 0.0;
  for (std::size_t i = 0; i < rep.times.size(); ++i) {
    cmax = std::max(cmax, rep.comp_c[i]);
    smax = std::max(smax, rep.comp_s[i]);
    pmax = std::max(pmax, rep.comp_p[i]);
  }
  rep.s_active = smax > denom_floor;
  rep.c_active = cmax > denom_floor;
  rep.p_active = pmax > denom_floor;

  TailWindow w = tail_window(dist, 6);
  rep.window_points = static_cast<int>(w.idx.size());
  std::vector<double> pss, sc2;
  for (int i : w.idx) {
    std::size_t k = static_cast<std::size_t>(i);
    if (rep.comp_s[k] > denom_floor) {
      rep.sup_rho_ps = std::max(rep.sup_rho_ps, rep.comp_p[k] / rep.comp_s[k]);
      pss.push_back(rep.comp_p[k] / (rep.comp_s[k] * rep.comp_s[k]));
    }
    if (rep.comp_c[k] > denom_floor) sc2.push_back(rep.comp_s[k] / (rep.comp_c[k] * rep.comp_c[k]));
  }
  auto med = [](std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  if (!pss.empty()) {
    rep.sup_rho_pss = *std::max_element(pss.begin(), pss.end());
    rep.med_rho_pss = med(pss);
  }
  if (!sc2.empty()) {
    rep.sup_rho_sc2 = *std::max_element(sc2.begin(), sc2.end());
    rep.med_rho_sc2 = med(sc2);
  }
  return rep;
}

LossDecayReport loss_decay_check(const FlowTrace& trace, const Eigen::VectorXd& theta_lim,
                                 const LossDecayOpts& opts) {
  LossDecayReport rep;
  std::vector<double> dist = distances(trace, theta_lim);
  std::vector<int> idx;
  if (opts.window_lo > 0.0 && opts.window_hi > opts.window_lo) {
    for (int i = 0; i < trace.checkpoints(); ++i)
      if (dist[static_cast<std::size_t>(i)] >= opts.window_lo && dist[static_cast<std::size_t>(i)] <= opts.window_hi)
        idx.push_back(i);
  } else {
    TailWindow w = tail_window(dist, opts.min_points);
    idx = w.idx;
  }
  rep.window_points = static_cast<int>(idx.size());
  if (static_cast<int>(idx.size()) < opts.min_points) return rep;

  std::vector<double> ld, lR, ts;
  for (int i : idx) {
    std::size_t k = static_cast<std::size_t>(i);
    if (trace.losses[k] <= 0.0 || dist[k] <= 0.0) continue;
    ld.push_back(std::log(dist[k]));
    lR.push_back(std::log(trace.losses[k]));
    ts.push_back(trace.times[k]);
  }
  if (static_cast<int>(ld.size()) < opts.min_points) return rep;

  LineFit loglog = fit_line(ld, lR);
  rep.loglog_exponent = loglog.slope;
  rep.loglog_r2 = loglog.r2;
  LineFit lin = fit_line(ts, lR);
  rep.linear_r2 = lin.r2;
  rep.linear_rate = -lin.slope;

  // Nonnegative LS over the two-term model c1 dist^4 + c2 e^{-beta t}, with
  // beta swept around the log-linear estimate.
  double beta0 = std::max(rep.linear_rate, 1e-6);
  double best_res = std::numeric_limits<double>::infinity();
  for (double mult : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    double beta = beta0 * mult;
    double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    std::vector<double> phi1, phi2, rv;
    for (int i : idx) {
      std::size_t k = static_cast<std::size_t>(i);
      double p1 = std::pow(dist[k], 4);
      double p2 = std::exp(-beta * trace.times[k]);
      phi1.push_back(p1);
      phi2.push_back(p2);
      rv.push_back(trace.losses[k]);
      a11 += p1 * p1;
      a12 += p1 * p2;
      a22 += p2 * p2;
      b1 += p1 * trace.losses[k];
      b2 += p2 * trace.losses[k];
    }
    double det = a11 * a22 - a12 * a12;
    double c1 = 0.0, c2 = 0.0;
    if (std::abs(det) > 1e-300) {
      c1 = (b1 * a22 - b2 * a12) / det;
      c2 = (a11 * b2 - a12 * b1) / det;
    }
    if (c1 < 0.0) {
      c1 = 0.0;
      c2 = (a22 > 0.0) ? std::max(0.0, b2 / a22) : 0.0;
    }
    if (c2 < 0.0) {
      c2 = 0.0;
      c1 = (a11 > 0.0) ? std::max(0.0, b1 / a11) : 0.0;
    }
    double res = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < rv.size(); ++k) {
      double e = rv[k] - c1 * phi1[k] - c2 * phi2[k];
      res += e * e;
      norm += rv[k] * rv[k];
    }
    res = (norm > 0.0) ? std::sqrt(res / norm) : 0.0;
    if (res < best_res) {
      best_res = res;
      rep.c_dist4 = c1;
      rep.c_exp = c2;
      rep.beta = beta;
      rep.fit_residual = res;
    }
  }
  return rep;
}

std::vector<Eigen::VectorXd> default_probe_grid(int d, int count, std::uint64_t seed, double box) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> grid;
  grid.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) grid.push_back(rng.uniform_vector(d, -box, box));
  return grid;
}

StabilityReport stability_probe(const ParamVector& theta_star, const LossContext& ctx, double delta,
                                int trials, const std::vector<Eigen::VectorXd>& probe_grid, Rng& rng,
                                const StabilityOpts& opts) {
  if (delta <= 0.0) throw std::invalid_argument("stability_probe: delta > 0 required");
  StabilityReport rep;
  rep.trials = trials;
  const int dim = theta_star.size();

  std::vector<double> ref;
  ref.reserve(probe_grid.size());
  for (const auto& x : probe_grid) ref.push_back(forward(theta_star, x, ctx.activation));

  for (int trial = 0; trial < trials; ++trial) {
    Rng trial_rng = rng.child(static_cast<std::uint64_t>(trial));
    ParamVector theta0 = theta_star;
    theta0.entries += trial_rng.in_ball(dim, delta);
    FlowTrace trace = integrate(theta0, ctx, opts.flow);
    if (trace.terminal == Terminal::Diverged) continue;

    ParamVector lim = ParamVector::from_entries(theta_star.m, theta_star.d, trace.theta_lim);
    bool converged = trace.terminal == Terminal::Converged || trace.terminal == Terminal::LossFloor;
    if (opts.polish) {
      PolishResult pol = polish_to_zero(lim, ctx);
      if (pol.converged) {
        lim = pol.theta;
        converged = true;
      }
    }
    if (!converged) {
      double term_loss = trace.losses.back();
      if (term_loss <= opts.zero_loss_tol) converged = true;
    }
    if (!converged) continue;
    ++rep.converged;

    double sup = 0.0;
    for (std::size_t i = 0; i < probe_grid.size(); ++i) {
      double diff = std::abs(forward(lim, probe_grid[i], ctx.activation) - ref[i]);
      sup = std::max(sup, diff);
    }
    if (sup > rep.worst_sup) {
      rep.worst_sup = sup;
      rep.witness = lim;
    }
  }

  double frac = trials > 0 ? static_cast<double>(rep.converged) / trials : 0.0;
  rep.insufficient_convergence = frac < opts.min_converged_fraction;
  rep.verdict = (!rep.insufficient_convergence && rep.worst_sup <= opts.sup_tol)
                    ? StabilityReport::Verdict::Stable
                    : StabilityReport::Verdict::Unstable;
  return rep;
}

}  // namespace minima
