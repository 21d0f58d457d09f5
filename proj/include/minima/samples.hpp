#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "minima/activation.hpp"
#include "minima/rng.hpp"

namespace minima {

enum class Provenance { Random, ConstructedTypeI, ConstructedTypeII, Perturbed };

struct SampleSet {
  std::vector<Eigen::VectorXd> points;
  std::uint64_t seed = 0;
  Provenance provenance = Provenance::Random;
  std::uint64_t base_seed = 0;  // Perturbed only
  double eps = 0.0;             // Perturbed only

  double min_pairwise_distance() const;
};

/// Singular-value audit of a rank decision. numerical_rank counts singular
/// values above tolerance * sigma_max.
struct RankReport {
  int matrix_rows = 0;
  int matrix_cols = 0;
  std::vector<double> singular_values;  // sorted descending
  int numerical_rank = 0;
  double tolerance = 0.0;
  double margin = 0.0;  // smallest retained singular value / largest
};

RankReport rank_report(const Eigen::MatrixXd& M, double tol);

/// M[i][k] = sigma(w_k . x_i), n x r.
Eigen::MatrixXd type1_matrix(const std::vector<Eigen::VectorXd>& weights,
                             const std::vector<Eigen::VectorXd>& points,
                             const ActivationSpec& act);

/// Columns [sigma(w_1 . x_i) ... sigma(w_r . x_i), sigma'(w_1 . x_i) x_i^T ...
/// sigma'(w_r . x_i) x_i^T], n x (d+1)r.
Eigen::MatrixXd type2_matrix(const std::vector<Eigen::VectorXd>& weights,
                             const std::vector<Eigen::VectorXd>& points,
                             const ActivationSpec& act);

std::pair<bool, RankReport> is_type1(const std::vector<Eigen::VectorXd>& weights,
                                     const std::vector<Eigen::VectorXd>& points,
                                     const ActivationSpec& act, double tol);

/// Full rank of the type-2 matrix (rank = n when n <= (d+1)r), plus the
/// type-1 property on the same set. model_width = 0 means "use r"; the
/// definition's sample range r <= n <= (d+1) * model_width is enforced.
std::pair<bool, RankReport> is_type2(const std::vector<Eigen::VectorXd>& weights,
                                     const std::vector<Eigen::VectorXd>& points,
                                     const ActivationSpec& act, double tol, int model_width = 0);

struct ConstructOpts {
  double margin_target = 1e-8;
  double rank_tol = 1e-8;
  int direction_tries = 40;
  int exchange_passes = 2;
  int eps_pow_lo = -10;  // candidate offsets +-2^k, k in [lo, hi]
  int eps_pow_hi = 3;
  double direction_gap = 1e-6;
};

struct ConstructError : std::runtime_error {
  double best_margin;
  ConstructError(const std::string& msg, double margin)
      : std::runtime_error(msg), best_margin(margin) {}
};

/// Inductive construction of r samples that certify is_type1 with margin above
/// margin_target: pick a direction with distinct weight projections, then line
/// search the offset that most improves the matrix margin; stalled rows redraw
/// the direction. Throws ConstructError with the best margin on failure.
SampleSet construct_type1(const std::vector<Eigen::VectorXd>& weights, const ActivationSpec& act,
                          Rng& rng, const ConstructOpts& opts = {});

/// Same scheme over the (d+1)r rows of the type-2 matrix.
SampleSet construct_type2(const std::vector<Eigen::VectorXd>& weights, const ActivationSpec& act,
                          Rng& rng, const ConstructOpts& opts = {});

/// Moves each point by a uniform random vector of norm <= eps.
SampleSet perturb_samples(const SampleSet& base, double eps, Rng& rng);

SampleSet random_samples(int n, int d, double box, Rng& rng, std::uint64_t seed_label = 0);

}  // namespace minima
