#include "minima/hessian_lab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <Eigen/Dense>

namespace minima {

HessianReport analyze_point(const ParamVector& theta_star, const Branch& branch,
                            const LossContext& ctx, const AnalyzeOpts& opts) {
  double L = loss(theta_star, ctx);
  if (L > opts.loss_tol)
    throw std::invalid_argument("analyze_point: point is not on the zero set at loss_tol");
  MembershipVerdict verdict = classify(theta_star, ctx.target, ctx.activation, opts.classify);
  if (verdict.outcome != MembershipVerdict::Outcome::OnBranch ||
      !verdict.branch->same_branch(branch))
    throw std::invalid_argument("analyze_point: point does not classify onto the given branch");

  HessianReport rep;
  rep.branch = branch.canonical();
  rep.n = ctx.n();
  rep.tolerance = opts.rank_tol;
  const int r = branch.r();
  const int l = branch.deficient();
  rep.lower_bound = r;
  rep.upper_bound = r + (r - l) * branch.d;
  rep.codim = branch.codim();

  RankReport rank = rank_report(hessian_gn(theta_star, ctx), opts.rank_tol);
  rep.rank = rank.numerical_rank;
  rep.singular_values = rank.singular_values;
  rep.morse_bott = rep.rank == rep.codim;
  return rep;
}

bool rank_equals_n_check(const Branch& branch, const TargetNetwork& target,
                         const SampleSet& samples, const ActivationSpec& act, Rng& rng,
                         double rank_tol) {
  const int r = branch.r();
  const int l = branch.deficient();
  const int n = static_cast<int>(samples.points.size());
  if (n > r + (r - l) * branch.d)
    throw std::invalid_argument("rank_equals_n_check: n <= r + (r-l)d required");
  ParamVector theta = sample_point(branch, target, rng);
  LossContext ctx = LossContext::make(target, samples.points, act);
  RankReport rank = rank_report(hessian_gn(theta, ctx), rank_tol);
  return rank.numerical_rank == n;
}

SeparationReport separation_probe(const Branch& branch, const LossContext& ctx, Rng& rng,
                                  const ProbeOpts& opts) {
  if (opts.radius <= 0.0) throw std::invalid_argument("separation_probe: radius > 0 required");
  SeparationReport rep;
  rep.trials = opts.trials;
  Branch probed = branch.canonical();
  ParamVector center = sample_point(branch, ctx.target, rng, opts.point);
  const int dim = center.size();

  for (int trial = 0; trial < opts.trials; ++trial) {
    Rng trial_rng = rng.child(static_cast<std::uint64_t>(trial));
    ParamVector theta0 = center;
    theta0.entries += trial_rng.in_ball(dim, opts.radius);
    FlowTrace trace;
    try {
      trace = integrate(theta0, ctx, opts.flow);
    } catch (const NumericsError&) {
      ++rep.non_converged;
      continue;
    }
    if (trace.terminal == Terminal::Diverged) {
      ++rep.non_converged;
      continue;
    }
    ParamVector terminal = ParamVector::from_entries(center.m, center.d, trace.theta_lim);
    double term_loss = trace.losses.back();
    if (opts.polish) {
      PolishResult pol = polish_to_zero(terminal, ctx);
      if (pol.converged) {
        terminal = pol.theta;
        term_loss = pol.loss;
      }
    }
    if (term_loss > opts.zero_loss_tol) {
      ++rep.non_converged;
      continue;
    }
    ++rep.zeros_found;
    MembershipVerdict verdict = classify(terminal, ctx.target, ctx.activation, opts.classify);
    bool on_probed = verdict.outcome == MembershipVerdict::Outcome::OnBranch &&
                     verdict.branch->same_branch(probed);
    if (on_probed) {
      ++rep.on_branch;
    } else {
      ++rep.off_branch;
      if (!rep.witness) {
        rep.witness = terminal;
        rep.witness_class = (verdict.outcome == MembershipVerdict::Outcome::OnBranch)
                                ? "other_branch"
                                : "off_qstar";
      }
    }
  }
  rep.outcome = (rep.off_branch == 0) ? SeparationReport::Outcome::Separated
                                      : SeparationReport::Outcome::NotSeparated;
  return rep;
}

namespace {

// Random samples, perturbed, certified type-II for the point's distinct
// weights; redraw until the certificate holds.
SampleSet certified_perturbed_samples(int n, int d, double box, double eps,
                                      const std::vector<Eigen::VectorXd>& weights,
                                      const ActivationSpec& act, Rng& rng, double tol, int m) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    SampleSet s = random_samples(n, d, box, rng);
    SampleSet p = perturb_samples(s, eps, rng);
    p.seed = s.seed;
    try {
      auto [ok, rep] = is_type2(weights, p.points, act, tol, m);
      if (ok) return p;
    } catch (const std::invalid_argument&) {
      return p;  // n outside the type-2 range: no certificate applies
    }
  }
  throw std::runtime_error("certified_perturbed_samples: no certified draw found");
}

std::vector<Eigen::VectorXd> distinct_weights(const ParamVector& theta, double tol) {
  std::vector<Eigen::VectorXd> ws;
  for (int k = 0; k < theta.m; ++k) {
    bool fresh = true;
    for (const auto& w : ws)
      if ((w - theta.w(k)).norm() <= tol) fresh = false;
    if (fresh) ws.push_back(theta.w(k));
  }
  return ws;
}

}  // namespace

std::vector<SweepCell> threshold_sweep(int m, int m0, int d, const TargetNetwork& target,
                                       const ActivationSpec& act, std::uint64_t seed,
                                       const SweepOpts& opts) {
  std::vector<Branch> branches = enumerate_branches(m, m0, d);
  struct Job {
    Branch branch;
    int n;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& branch : branches)
    for (int n : opts.n_list)
      for (int s = 0; s < opts.seeds_per_cell; ++s)
        jobs.push_back({branch, n, seed + static_cast<std::uint64_t>(s)});

  std::vector<SweepCell> cells(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) break;
      const Job& job = jobs[i];
      const Branch& branch = job.branch;
      SweepCell cell;
      cell.m = m;
      cell.m0 = m0;
      cell.d = d;
      cell.n = job.n;
      cell.r = branch.r();
      cell.partition = branch.partition;
      cell.l = branch.deficient();
      cell.seed = job.seed;
      cell.codim = branch.codim();

      // Deterministic per-cell stream.
      Rng rng(job.seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
      ParamVector theta = sample_point(branch, target, rng, opts.point);
      std::vector<Eigen::VectorXd> ws = distinct_weights(theta, 1e-9);
      SampleSet samples = certified_perturbed_samples(job.n, d, opts.sample_box, opts.sample_eps,
                                                       ws, act, rng, opts.analyze.rank_tol, m);
      LossContext ctx = LossContext::make(target, samples.points, act);
      HessianReport rep = analyze_point(theta, branch, ctx, opts.analyze);
      cell.rank = rep.rank;
      cell.morse_bott = rep.morse_bott;

      const int r = branch.r();
      const int l = cell.l;
      cell.predicted_morse_bott =
          (2 * r >= m + m0) && (l == 2 * r - m - m0) && (job.n >= branch.codim());
      if (job.n <= (d + 1) * m0)
        cell.predicted_separated = "no";
      else if (job.n >= r + (m + m0 - r) * d)
        cell.predicted_separated = "yes";
      else
        cell.predicted_separated = "-";

      if (opts.run_probes) {
        ProbeOpts probe = opts.probe;
        probe.trials = opts.probe_trials;
        SeparationReport sep = separation_probe(branch, ctx, rng, probe);
        cell.separated = sep.outcome == SeparationReport::Outcome::Separated ? "yes" : "no";
        cell.witness_class = sep.witness_class;
      }
      cells[i] = cell;
    }
  };
  int jobs_n = std::max(1, opts.jobs);
  if (jobs_n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs_n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return cells;
}

bool isolated_minimum_check(const TargetNetwork& target, const LossContext& ctx, Rng& rng,
                            const IsolatedMinimumOpts& opts) {
  if (ctx.target.m0 != target.m0)
    throw std::invalid_argument("isolated_minimum_check: context/target mismatch");
  // Teacher point in student coordinates; the model width must equal m0.
  ParamVector theta_bar = ParamVector::zeros(target.m0, target.d);
  for (int k = 0; k < target.m0; ++k) {
    theta_bar.a(k) = target.bar_a[k];
    theta_bar.w(k) = target.bar_w[static_cast<std::size_t>(k)];
  }
  const int dim = theta_bar.size();
  for (int trial = 0; trial < opts.trials; ++trial) {
    Rng trial_rng = rng.child(static_cast<std::uint64_t>(trial));
    ParamVector theta0 = theta_bar;
    theta0.entries += trial_rng.in_ball(dim, opts.radius);
    FlowTrace trace = integrate(theta0, ctx, opts.flow);
    if ((trace.theta_lim - theta_bar.entries).norm() > opts.dist_tol) return false;
  }
  return true;
}

}  // namespace minima
