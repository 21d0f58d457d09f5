#include "minima/branches.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace minima {

void Partition::validate() const {
  if (q.size() < 2 || q.front() != 0) throw std::invalid_argument("Partition: q must start at 0");
  for (std::size_t i = 1; i < q.size(); ++i)
    if (q[i] <= q[i - 1]) throw std::invalid_argument("Partition: q must strictly increase");
}

std::vector<Partition> enumerate_partitions(int m, int r) {
  if (r < 1 || r > m) throw std::invalid_argument("enumerate_partitions: 1 <= r <= m required");
  std::vector<Partition> out;
  std::vector<int> q(static_cast<std::size_t>(r + 1));
  q[0] = 0;
  q[static_cast<std::size_t>(r)] = m;
  // Choose the r-1 interior cut points in lexicographic order.
  std::vector<int> cuts(static_cast<std::size_t>(r - 1));
  std::iota(cuts.begin(), cuts.end(), 1);
  auto emit = [&]() {
    for (int i = 0; i < r - 1; ++i) q[static_cast<std::size_t>(i + 1)] = cuts[static_cast<std::size_t>(i)];
    out.push_back(Partition{q});
  };
  if (r == 1) {
    out.push_back(Partition{{0, m}});
    return out;
  }
  while (true) {
    emit();
    int i = r - 2;
    while (i >= 0 && cuts[static_cast<std::size_t>(i)] == m - (r - 1 - i)) --i;
    if (i < 0) break;
    ++cuts[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < r - 1; ++j)
      cuts[static_cast<std::size_t>(j)] = cuts[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

int deficient_number(const Partition& p, int m0) {
  p.validate();
  if (p.r() < m0) throw std::invalid_argument("deficient_number: partition needs r >= m0 blocks");
  int l = 0;
  for (int t = m0; t < p.r(); ++t)
    if (p.block_size(t) == 1) ++l;
  return l;
}

int min_deficient(int r, int m, int m0) {
  if (r < m0 || r > m) throw std::invalid_argument("min_deficient: m0 <= r <= m required");
  return std::max(0, 2 * r - m - m0);
}

void Branch::validate() const {
  partition.validate();
  if (partition.m() != m) throw std::invalid_argument("Branch: partition must cover m");
  if (m0 < 1 || m0 > r()) throw std::invalid_argument("Branch: m0 <= r required");
  if (d < 1) throw std::invalid_argument("Branch: d >= 1 required");
  if (static_cast<int>(perm.size()) != m) throw std::invalid_argument("Branch: perm must have length m");
  std::vector<bool> seen(static_cast<std::size_t>(m), false);
  for (int v : perm) {
    if (v < 0 || v >= m || seen[static_cast<std::size_t>(v)])
      throw std::invalid_argument("Branch: perm must be a permutation of 0..m-1");
    seen[static_cast<std::size_t>(v)] = true;
  }
}

std::vector<int> Branch::assignment() const {
  // Base point: neuron j belongs to partition block t iff q_t-1 <= j < q_t
  // (0-based). Position k holds neuron perm[k], so its group is the block of
  // perm[k]. Free groups are then renumbered by first appearance.
  std::vector<int> block_of(static_cast<std::size_t>(m));
  for (int t = 0; t < r(); ++t)
    for (int j = partition.q[static_cast<std::size_t>(t)]; j < partition.q[static_cast<std::size_t>(t + 1)]; ++j)
      block_of[static_cast<std::size_t>(j)] = t;
  std::vector<int> phi(static_cast<std::size_t>(m));
  std::map<int, int> free_id;
  int next_free = m0;
  for (int k = 0; k < m; ++k) {
    int t = block_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
    if (t < m0) {
      phi[static_cast<std::size_t>(k)] = t;
    } else {
      auto it = free_id.find(t);
      if (it == free_id.end()) it = free_id.emplace(t, next_free++).first;
      phi[static_cast<std::size_t>(k)] = it->second;
    }
  }
  return phi;
}

Branch Branch::from_assignment(int m0, int d, const std::vector<int>& phi) {
  const int m = static_cast<int>(phi.size());
  int r = 0;
  for (int g : phi) r = std::max(r, g + 1);
  if (r < m0) throw std::invalid_argument("from_assignment: all target groups must appear");
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(r));
  for (int k = 0; k < m; ++k) {
    int g = phi[static_cast<std::size_t>(k)];
    if (g < 0 || g >= r) throw std::invalid_argument("from_assignment: bad group id");
    groups[static_cast<std::size_t>(g)].push_back(k);
  }
  for (const auto& g : groups)
    if (g.empty()) throw std::invalid_argument("from_assignment: empty group");
  Branch b;
  b.m = m;
  b.m0 = m0;
  b.d = d;
  b.partition.q.resize(static_cast<std::size_t>(r + 1));
  b.partition.q[0] = 0;
  b.perm.resize(static_cast<std::size_t>(m));
  int slot = 0;
  for (int t = 0; t < r; ++t) {
    for (int k : groups[static_cast<std::size_t>(t)]) {
      b.perm[static_cast<std::size_t>(k)] = slot++;
    }
    b.partition.q[static_cast<std::size_t>(t + 1)] = slot;
  }
  b.validate();
  return b;
}

Branch Branch::canonical() const { return from_assignment(m0, d, assignment()); }

bool Branch::same_branch(const Branch& other) const {
  return m == other.m && m0 == other.m0 && assignment() == other.assignment();
}

int branch_dim(const Branch& branch) { return branch.dim(); }

namespace {

// Restricted-growth strings enumerate set partitions of {0..m-1}.
void rgs_recurse(std::vector<int>& s, int pos, int max_used, std::vector<std::vector<int>>& out) {
  if (pos == static_cast<int>(s.size())) {
    out.push_back(s);
    return;
  }
  for (int g = 0; g <= max_used + 1; ++g) {
    s[static_cast<std::size_t>(pos)] = g;
    rgs_recurse(s, pos + 1, std::max(max_used, g), out);
  }
}

}  // namespace

std::vector<Branch> enumerate_branches(int m, int m0, int d) {
  if (m0 < 1 || m0 > m) throw std::invalid_argument("enumerate_branches: 1 <= m0 <= m required");
  std::vector<std::vector<int>> rgs;
  std::vector<int> s(static_cast<std::size_t>(m));
  rgs_recurse(s, 0, -1, rgs);

  std::set<std::vector<int>> seen;
  std::vector<Branch> out;
  for (const auto& part : rgs) {
    int blocks = *std::max_element(part.begin(), part.end()) + 1;
    if (blocks < m0) continue;
    // Choose which blocks realize the ordered targets; the rest are free.
    std::vector<int> ids(static_cast<std::size_t>(blocks));
    std::iota(ids.begin(), ids.end(), 0);
    std::vector<int> choose(static_cast<std::size_t>(m0));
    std::vector<bool> used(static_cast<std::size_t>(blocks), false);
    // Enumerate injective maps target -> block via recursion on a stack.
    std::vector<int> stack{0};
    std::vector<int> pick(static_cast<std::size_t>(m0), -1);
    std::function<void(int)> rec = [&](int t) {
      if (t == m0) {
        std::vector<int> phi(static_cast<std::size_t>(m));
        std::vector<int> relabel(static_cast<std::size_t>(blocks), -1);
        for (int tt = 0; tt < m0; ++tt) relabel[static_cast<std::size_t>(pick[static_cast<std::size_t>(tt)])] = tt;
        int next_free = m0;
        for (int k = 0; k < m; ++k) {
          int b = part[static_cast<std::size_t>(k)];
          if (relabel[static_cast<std::size_t>(b)] < 0) relabel[static_cast<std::size_t>(b)] = next_free++;
          phi[static_cast<std::size_t>(k)] = relabel[static_cast<std::size_t>(b)];
        }
        if (seen.insert(phi).second) out.push_back(Branch::from_assignment(m0, d, phi));
        return;
      }
      for (int b = 0; b < blocks; ++b) {
        if (used[static_cast<std::size_t>(b)]) continue;
        used[static_cast<std::size_t>(b)] = true;
        pick[static_cast<std::size_t>(t)] = b;
        rec(t + 1);
        used[static_cast<std::size_t>(b)] = false;
      }
    };
    rec(0);
    (void)choose;
    (void)ids;
    (void)stack;
  }
  std::sort(out.begin(), out.end(), [](const Branch& a, const Branch& b) {
    if (a.r() != b.r()) return a.r() < b.r();
    return a.assignment() < b.assignment();
  });
  return out;
}

ParamVector apply_block_permutation(const ParamVector& theta, const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != theta.m)
    throw std::invalid_argument("apply_block_permutation: perm length mismatch");
  ParamVector out = ParamVector::zeros(theta.m, theta.d);
  for (int k = 0; k < theta.m; ++k) {
    int src = perm[static_cast<std::size_t>(k)];
    out.a(k) = theta.a(src);
    out.w(k) = theta.w(src);
  }
  return out;
}

namespace {

// Split `total` into `count` coefficients whose exact floating-point sum is
// `total`, each relevant partial kept away from zero by a_split_min.
std::vector<double> split_sum(double total, int count, double a_split_min, Rng& rng) {
  std::vector<double> parts(static_cast<std::size_t>(count));
  if (count == 1) {
    parts[0] = total;
    return parts;
  }
  for (int tries = 0; tries < 100; ++tries) {
    double acc = 0.0;
    for (int i = 0; i < count - 1; ++i) {
      parts[static_cast<std::size_t>(i)] = rng.uniform(-1.0, 1.0);
      acc += parts[static_cast<std::size_t>(i)];
    }
    parts[static_cast<std::size_t>(count - 1)] = total - acc;
    bool ok = true;
    for (double v : parts)
      if (std::abs(v) < a_split_min) ok = false;
    if (ok) return parts;
  }
  // Deterministic fallback keeps the sum exact.
  double acc = 0.0;
  for (int i = 0; i < count - 1; ++i) {
    parts[static_cast<std::size_t>(i)] = (i % 2 == 0) ? 0.5 : -0.75;
    acc += parts[static_cast<std::size_t>(i)];
  }
  parts[static_cast<std::size_t>(count - 1)] = total - acc;
  return parts;
}

}  // namespace

ParamVector sample_point(const Branch& branch, const TargetNetwork& target, Rng& rng,
                         const SamplePointOpts& opts) {
  branch.validate();
  target.validate();
  if (branch.m0 != target.m0 || branch.d != target.d)
    throw std::invalid_argument("sample_point: branch/target shape mismatch");
  const int r = branch.r();
  const int d = branch.d;

  // Fresh weights for the free blocks, kept margin-away from every other
  // weight.
  std::vector<Eigen::VectorXd> all_w(target.bar_w.begin(), target.bar_w.end());
  std::vector<Eigen::VectorXd> fresh;
  for (int t = branch.m0; t < r; ++t) {
    bool placed = false;
    for (int tries = 0; tries < opts.max_tries; ++tries) {
      Eigen::VectorXd u = rng.uniform_vector(d, -opts.weight_box, opts.weight_box);
      bool far = true;
      for (const auto& w : all_w)
        if ((w - u).norm() < opts.margin) far = false;
      if (far) {
        all_w.push_back(u);
        fresh.push_back(u);
        placed = true;
        break;
      }
    }
    if (!placed)
      throw std::runtime_error("sample_point: could not place a fresh weight at the margin");
  }

  // Base point on Q_P^r, then the block permutation.
  ParamVector base = ParamVector::zeros(branch.m, d);
  for (int t = 0; t < r; ++t) {
    int lo = branch.partition.q[static_cast<std::size_t>(t)];
    int size = branch.partition.block_size(t);
    Eigen::VectorXd wt = (t < branch.m0) ? target.bar_w[static_cast<std::size_t>(t)]
                                         : fresh[static_cast<std::size_t>(t - branch.m0)];
    double total = (t < branch.m0) ? target.bar_a[t] : 0.0;
    std::vector<double> parts;
    if (t < branch.m0) {
      parts = split_sum(total, size, opts.a_split_min, rng);
    } else if (size == 1) {
      parts = {0.0};
    } else {
      parts = split_sum(0.0, size, opts.a_split_min, rng);
    }
    for (int j = 0; j < size; ++j) {
      base.a(lo + j) = parts[static_cast<std::size_t>(j)];
      base.w(lo + j) = wt;
    }
  }
  return apply_block_permutation(base, branch.perm);
}

Eigen::MatrixXd branch_tangent_basis(const Branch& branch) {
  branch.validate();
  const int m = branch.m;
  const int d = branch.d;
  const int dim = branch.dim();
  std::vector<int> phi = branch.assignment();
  const int r = branch.r();
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(r));
  for (int k = 0; k < m; ++k) groups[static_cast<std::size_t>(phi[static_cast<std::size_t>(k)])].push_back(k);

  Eigen::MatrixXd B = Eigen::MatrixXd::Zero((d + 1) * m, dim);
  int col = 0;
  for (int t = 0; t < r; ++t) {
    const auto& g = groups[static_cast<std::size_t>(t)];
    const int s = static_cast<int>(g.size());
    // Helmert basis of the sum-zero subspace over the group's a-coordinates.
    for (int j = 1; j < s; ++j) {
      double norm = std::sqrt(static_cast<double>(j) * (j + 1));
      for (int i = 0; i < j; ++i) B(g[static_cast<std::size_t>(i)] * (d + 1), col) = 1.0 / norm;
      B(g[static_cast<std::size_t>(j)] * (d + 1), col) = -static_cast<double>(j) / norm;
      ++col;
    }
    if (t >= branch.m0) {
      // Free block weights move together in each coordinate.
      for (int coord = 0; coord < d; ++coord) {
        for (int k : g) B(k * (d + 1) + 1 + coord, col) = 1.0 / std::sqrt(static_cast<double>(s));
        ++col;
      }
    }
  }
  return B;
}

namespace {

struct Clustering {
  std::vector<std::vector<int>> clusters;  // member positions
  std::vector<Eigen::VectorXd> centers;
};

Clustering cluster_weights(const ParamVector& theta, double tol) {
  const int m = theta.m;
  std::vector<int> parent(static_cast<std::size_t>(m));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if ((theta.w(i) - theta.w(j)).norm() <= tol) parent[static_cast<std::size_t>(find(i))] = find(j);
  std::map<int, std::vector<int>> by_root;
  for (int i = 0; i < m; ++i) by_root[find(i)].push_back(i);
  Clustering c;
  for (auto& [root, members] : by_root) {
    Eigen::VectorXd center = Eigen::VectorXd::Zero(theta.d);
    for (int k : members) center += theta.w(k);
    center /= static_cast<double>(members.size());
    c.clusters.push_back(members);
    c.centers.push_back(center);
  }
  return c;
}

struct BranchFit {
  bool ok = false;
  std::vector<int> phi;
  ParamVector reconstructed;
  double distance = 0.0;
};

// Try to read a branch assignment off the clustering; reconstruct the exact
// branch point and measure the distance.
BranchFit fit_branch(const ParamVector& theta, const TargetNetwork& target, const Clustering& c,
                     double cluster_tol, double a_tol) {
  BranchFit fit;
  const int m0 = target.m0;
  std::vector<int> cluster_of_target(static_cast<std::size_t>(m0), -1);
  std::vector<int> group_of_cluster(c.clusters.size(), -1);
  for (std::size_t ci = 0; ci < c.clusters.size(); ++ci) {
    for (int t = 0; t < m0; ++t) {
      if ((c.centers[ci] - target.bar_w[static_cast<std::size_t>(t)]).norm() <= cluster_tol) {
        if (cluster_of_target[static_cast<std::size_t>(t)] != -1) return fit;  // two clusters on one teacher weight
        cluster_of_target[static_cast<std::size_t>(t)] = static_cast<int>(ci);
        group_of_cluster[ci] = t;
      }
    }
  }
  for (int t = 0; t < m0; ++t)
    if (cluster_of_target[static_cast<std::size_t>(t)] < 0) return fit;  // teacher weight not realized

  int next_free = m0;
  for (std::size_t ci = 0; ci < c.clusters.size(); ++ci)
    if (group_of_cluster[ci] < 0) group_of_cluster[ci] = next_free++;

  // Coefficient sums must match bar_a on target clusters and vanish on free
  // clusters.
  ParamVector rec = theta;
  for (std::size_t ci = 0; ci < c.clusters.size(); ++ci) {
    const auto& members = c.clusters[ci];
    double sum = 0.0;
    for (int k : members) sum += theta.a(k);
    int g = group_of_cluster[ci];
    double want = (g < m0) ? target.bar_a[g] : 0.0;
    if (std::abs(sum - want) > a_tol) return fit;
    double corr = (want - sum) / static_cast<double>(members.size());
    Eigen::VectorXd wt = (g < m0) ? target.bar_w[static_cast<std::size_t>(g)] : c.centers[ci];
    for (int k : members) {
      rec.a(k) = theta.a(k) + corr;
      rec.w(k) = wt;
    }
  }
  // Free clusters must stay distinct from teacher weights and each other;
  // merged ones were already joined by the clustering.
  fit.ok = true;
  fit.phi.resize(static_cast<std::size_t>(theta.m));
  // Renumber free groups by first appearance over positions.
  std::vector<int> group_pos(static_cast<std::size_t>(theta.m));
  for (std::size_t ci = 0; ci < c.clusters.size(); ++ci)
    for (int k : c.clusters[ci]) group_pos[static_cast<std::size_t>(k)] = group_of_cluster[ci];
  std::map<int, int> relabel;
  int nf = m0;
  for (int k = 0; k < theta.m; ++k) {
    int g = group_pos[static_cast<std::size_t>(k)];
    if (g < m0) {
      fit.phi[static_cast<std::size_t>(k)] = g;
    } else {
      auto it = relabel.find(g);
      if (it == relabel.end()) it = relabel.emplace(g, nf++).first;
      fit.phi[static_cast<std::size_t>(k)] = it->second;
    }
  }
  fit.reconstructed = rec;
  fit.distance = (rec.entries - theta.entries).norm();
  return fit;
}

double sup_residual(const ParamVector& theta, const TargetNetwork& target,
                    const ActivationSpec& act, const ClassifyOpts& opts) {
  Rng rng(opts.probe_seed);
  double sup = 0.0;
  for (int i = 0; i < opts.probe_points; ++i) {
    Eigen::VectorXd x = rng.uniform_vector(target.d, -opts.probe_box, opts.probe_box);
    double diff = std::abs(forward(theta, x, act) - target_forward(target, x, act));
    sup = std::max(sup, diff);
  }
  return sup;
}

}  // namespace

MembershipVerdict classify(const ParamVector& theta, const TargetNetwork& target,
                           const ActivationSpec& act, const ClassifyOpts& opts) {
  theta.validate();
  target.validate();
  MembershipVerdict verdict;
  verdict.cluster_tolerance = opts.cluster_tol;

  Clustering fine = cluster_weights(theta, opts.cluster_tol);
  Clustering coarse = cluster_weights(theta, 10.0 * opts.cluster_tol);
  verdict.weight_clusters = fine.clusters;

  BranchFit ffine = fit_branch(theta, target, fine, opts.cluster_tol, opts.a_tol);
  bool same_grouping = fine.clusters == coarse.clusters;

  if (ffine.ok && same_grouping) {
    verdict.outcome = MembershipVerdict::Outcome::OnBranch;
    verdict.branch = Branch::from_assignment(target.m0, target.d, ffine.phi);
    verdict.distance = ffine.distance;
    verdict.reconstructed = ffine.reconstructed;
    return verdict;
  }
  if (!same_grouping) {
    BranchFit fcoarse = fit_branch(theta, target, coarse, 10.0 * opts.cluster_tol, opts.a_tol);
    if (ffine.ok && fcoarse.ok && ffine.phi != fcoarse.phi) {
      verdict.outcome = MembershipVerdict::Outcome::Ambiguous;
      verdict.candidates.push_back(Branch::from_assignment(target.m0, target.d, ffine.phi));
      verdict.candidates.push_back(Branch::from_assignment(target.m0, target.d, fcoarse.phi));
      return verdict;
    }
    const BranchFit& best = ffine.ok ? ffine : fcoarse;
    if (best.ok) {
      verdict.outcome = MembershipVerdict::Outcome::OnBranch;
      verdict.branch = Branch::from_assignment(target.m0, target.d, best.phi);
      verdict.distance = best.distance;
      verdict.reconstructed = best.reconstructed;
      return verdict;
    }
  }
  verdict.outcome = MembershipVerdict::Outcome::NotInQStar;
  verdict.residual = sup_residual(theta, target, act, opts);
  return verdict;
}

std::pair<int, int> closure_intersection_bound(const Partition& P, const Partition& Pprime,
                                               const std::vector<int>& perm, int m0) {
  P.validate();
  Pprime.validate();
  if (P.m() != Pprime.m()) throw std::invalid_argument("closure_intersection_bound: same m required");
  const int m = P.m();
  if (static_cast<int>(perm.size()) != m)
    throw std::invalid_argument("closure_intersection_bound: perm length mismatch");
  (void)m0;
  std::vector<int> block_of(static_cast<std::size_t>(m));
  for (int t = 0; t < P.r(); ++t)
    for (int j = P.q[static_cast<std::size_t>(t)]; j < P.q[static_cast<std::size_t>(t + 1)]; ++j)
      block_of[static_cast<std::size_t>(j)] = t;
  int m_prime = 0;
  for (int t = 0; t < Pprime.r(); ++t) {
    std::set<int> touched;
    for (int j = Pprime.q[static_cast<std::size_t>(t)]; j < Pprime.q[static_cast<std::size_t>(t + 1)]; ++j)
      touched.insert(block_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(j)])]);
    if (touched.size() > 1) ++m_prime;
  }
  return {m_prime, P.r() - m_prime};
}

}  // namespace minima
