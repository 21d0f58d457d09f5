#pragma once

#include <optional>
#include <string>
#include <vector>

#include "minima/branches.hpp"
#include "minima/flow.hpp"
#include "minima/network.hpp"
#include "minima/samples.hpp"

namespace minima {

struct HessianReport {
  Branch branch;
  int n = 0;
  int rank = 0;
  std::vector<double> singular_values;
  int lower_bound = 0;  // r
  int upper_bound = 0;  // r + (r - l) d
  int codim = 0;        // r + (m + m0 - r) d
  bool morse_bott = false;
  double tolerance = 0.0;
  bool generic = true;
};

struct AnalyzeOpts {
  double rank_tol = 1e-8;
  double loss_tol = 1e-16;
  ClassifyOpts classify;
};

/// Gauss-Newton rank analysis at a zero-loss branch point; morse_bott means
/// rank equals the branch codimension.
HessianReport analyze_point(const ParamVector& theta_star, const Branch& branch,
                            const LossContext& ctx, const AnalyzeOpts& opts = {});

/// rank(Hess R) = n at a generic branch point when n <= r + (r - l) d.
bool rank_equals_n_check(const Branch& branch, const TargetNetwork& target,
                         const SampleSet& samples, const ActivationSpec& act, Rng& rng,
                         double rank_tol = 1e-8);

struct ProbeOpts {
  double radius = 0.1;
  int trials = 50;
  double zero_loss_tol = 1e-8;  // terminal counts as a found zero below this
  bool polish = true;
  IntegrateOpts flow;
  ClassifyOpts classify;
  SamplePointOpts point;
};

struct SeparationReport {
  enum class Outcome { Separated, NotSeparated };
  Outcome outcome = Outcome::Separated;
  int trials = 0;
  int zeros_found = 0;
  int on_branch = 0;
  int off_branch = 0;
  int non_converged = 0;
  std::optional<ParamVector> witness;
  std::string witness_class;  // "other_branch" or "off_qstar"
};

/// Local minimizations from a ball around a generic branch point; Separated
/// iff every found zero classifies onto the probed branch.
SeparationReport separation_probe(const Branch& branch, const LossContext& ctx, Rng& rng,
                                  const ProbeOpts& opts = {});

struct SweepCell {
  int m = 0, m0 = 0, d = 0, n = 0, r = 0;
  Partition partition;
  int l = 0;
  std::uint64_t seed = 0;
  int rank = 0;
  int codim = 0;
  bool morse_bott = false;
  std::string separated;      // "yes" / "no" / "" (not probed)
  std::string witness_class;  // for NotSeparated cells
  bool predicted_morse_bott = false;
  std::string predicted_separated;  // "yes" / "no" / "-"
};

struct SweepOpts {
  std::vector<int> n_list;
  int seeds_per_cell = 5;
  double sample_eps = 1e-3;
  double sample_box = 1.0;
  bool run_probes = false;
  int probe_trials = 20;
  ProbeOpts probe;
  AnalyzeOpts analyze;
  SamplePointOpts point;
  int jobs = 1;
};

/// Rank / Morse-Bott / separation verdicts per (branch, n, seed) cell; the
/// Table 1-2 reproduction at desk scale.
std::vector<SweepCell> threshold_sweep(int m, int m0, int d, const TargetNetwork& target,
                                       const ActivationSpec& act, std::uint64_t seed,
                                       const SweepOpts& opts);

struct IsolatedMinimumOpts {
  double radius = 0.05;
  int trials = 200;
  double dist_tol = 1e-6;
  IntegrateOpts flow;
};

/// All flows from a ball around the teacher point return to it (width m = m0).
bool isolated_minimum_check(const TargetNetwork& target, const LossContext& ctx, Rng& rng,
                            const IsolatedMinimumOpts& opts = {});

}  // namespace minima
