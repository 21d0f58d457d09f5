#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "minima/network.hpp"
#include "minima/rng.hpp"

namespace minima {

/// P = (q_0, ..., q_r) with 0 = q_0 < q_1 < ... < q_r = m; block t covers the
/// 1-based index range (q_{t-1}, q_t].
struct Partition {
  std::vector<int> q;

  int r() const { return static_cast<int>(q.size()) - 1; }
  int m() const { return q.back(); }
  int block_size(int t) const { return q[static_cast<std::size_t>(t + 1)] - q[static_cast<std::size_t>(t)]; }
  void validate() const;
  bool operator==(const Partition& other) const { return q == other.q; }
};

/// All C(m-1, r-1) partitions of {1..m} into r blocks, lexicographic in q.
std::vector<Partition> enumerate_partitions(int m, int r);

/// Count of singleton blocks past the target blocks: t in {m0+1..r} with
/// q_t - q_{t-1} = 1.
int deficient_number(const Partition& p, int m0);

/// Smallest deficient number over partitions with r blocks: max(0, 2r-m-m0).
int min_deficient(int r, int m, int m0);

/// One affine piece Q_{P,pi}^r of the zero-generalization set. perm is 0-based:
/// position k of a branch point holds neuron perm[k] of the base Q_P^r point.
struct Branch {
  int m = 0;
  int m0 = 0;
  int d = 0;
  Partition partition;
  std::vector<int> perm;

  int r() const { return partition.r(); }
  int deficient() const { return deficient_number(partition, m0); }
  int dim() const { return (m - r()) + (r() - m0) * d; }
  int codim() const { return (d + 1) * m - dim(); }
  void validate() const;

  /// Group id per position: 0..m0-1 are the target groups, m0.. the free
  /// groups numbered by first appearance. Canonically identifies the branch.
  std::vector<int> assignment() const;
  Branch canonical() const;
  bool same_branch(const Branch& other) const;
  static Branch from_assignment(int m0, int d, const std::vector<int>& phi);
};

int branch_dim(const Branch& branch);

/// All distinct branches for (m, m0, d), deduplicated across (P, pi) pairs by
/// canonical assignment; ordered by r, then assignment lexicographically.
std::vector<Branch> enumerate_branches(int m, int m0, int d);

/// Permute neuron blocks: out block k = in block perm[k].
ParamVector apply_block_permutation(const ParamVector& theta, const std::vector<int>& perm);

struct SamplePointOpts {
  double weight_box = 2.0;    // fresh weights drawn in [-box, box]^d
  double margin = 0.1;        // min distance of fresh weights to all others
  double a_split_min = 0.05;  // genericity floor for within-block coefficients
  int max_tries = 200;
};

/// A generic point of the branch: target blocks share the teacher weight with
/// coefficients summing to bar_a_t; free blocks get a fresh weight and
/// coefficients summing to exactly 0.
ParamVector sample_point(const Branch& branch, const TargetNetwork& target, Rng& rng,
                         const SamplePointOpts& opts = {});

/// Orthonormal basis of the branch closure's tangent space, (d+1)m x dim.
Eigen::MatrixXd branch_tangent_basis(const Branch& branch);

struct ClassifyOpts {
  double cluster_tol = 1e-6;
  double loss_tol = 1e-16;
  double a_tol = 1e-8;
  int probe_points = 100;
  std::uint64_t probe_seed = 20240601;
  double probe_box = 1.0;
};

struct MembershipVerdict {
  enum class Outcome { OnBranch, Ambiguous, NotInQStar };
  Outcome outcome = Outcome::NotInQStar;
  std::optional<Branch> branch;            // OnBranch
  double distance = 0.0;                   // OnBranch: |theta - reconstructed|
  std::vector<Branch> candidates;          // Ambiguous
  double residual = 0.0;                   // NotInQStar: sup |g - f*| on probes
  std::vector<std::vector<int>> weight_clusters;
  double cluster_tolerance = 0.0;
  std::optional<ParamVector> reconstructed;
};

/// Clusters the weights, matches clusters to teacher weights or zero-sum free
/// groups, and reconstructs the nearest exact branch point. Borderline
/// clusterings (gap within a decade of the tolerance) yield Ambiguous with the
/// candidate branches.
MembershipVerdict classify(const ParamVector& theta, const TargetNetwork& target,
                           const ActivationSpec& act, const ClassifyOpts& opts = {});

/// Lemma-style bound on closure intersections: m' counts P'-blocks whose
/// pi-image is split across P-blocks; at most r - m' distinct weights survive
/// on the intersection. Returns {m', r - m'}.
std::pair<int, int> closure_intersection_bound(const Partition& P, const Partition& Pprime,
                                               const std::vector<int>& perm, int m0);

}  // namespace minima
