#include "minima/samples.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

namespace minima {

namespace {

void check_weights(const std::vector<Eigen::VectorXd>& weights) {
  if (weights.empty()) throw std::invalid_argument("at least one weight required");
  for (std::size_t i = 0; i < weights.size(); ++i)
    for (std::size_t j = i + 1; j < weights.size(); ++j)
      if ((weights[i] - weights[j]).norm() == 0.0)
        throw std::invalid_argument("weights must be pairwise distinct");
}

Eigen::VectorXd type2_row(const std::vector<Eigen::VectorXd>& weights, const Eigen::VectorXd& x,
                          const ActivationSpec& act) {
  const int r = static_cast<int>(weights.size());
  const int d = static_cast<int>(x.size());
  Eigen::VectorXd row(r * (d + 1));
  for (int k = 0; k < r; ++k) {
    double z = weights[static_cast<std::size_t>(k)].dot(x);
    row[k] = act.eval(z);
    double s1 = act.d1(z);
    for (int t = 0; t < d; ++t) row[r + k * d + t] = s1 * x[t];
  }
  return row;
}

Eigen::VectorXd type1_row(const std::vector<Eigen::VectorXd>& weights, const Eigen::VectorXd& x,
                          const ActivationSpec& act) {
  const int r = static_cast<int>(weights.size());
  Eigen::VectorXd row(r);
  for (int k = 0; k < r; ++k) row[k] = act.eval(weights[static_cast<std::size_t>(k)].dot(x));
  return row;
}

// Margin sigma_last/sigma_first of the stacked rows, where "last" is the
// smallest singular value the row count can support.
double stack_margin(const std::vector<Eigen::VectorXd>& rows) {
  const int n = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows.front().size());
  Eigen::MatrixXd M(n, c);
  for (int i = 0; i < n; ++i) M.row(i) = rows[static_cast<std::size_t>(i)];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& sv = svd.singularValues();
  if (sv[0] <= 0.0 || !std::isfinite(sv[0])) return 0.0;
  int idx = std::min(n, c) - 1;
  return sv[idx] / sv[0];
}

using RowFn = Eigen::VectorXd (*)(const std::vector<Eigen::VectorXd>&, const Eigen::VectorXd&,
                                  const ActivationSpec&);

// Greedy row-by-row construction followed by exchange passes, both driven by
// the margin of the assembled matrix.
SampleSet construct_impl(const std::vector<Eigen::VectorXd>& weights, const ActivationSpec& act,
                         Rng& rng, const ConstructOpts& opts, int n_rows, RowFn row_fn,
                         Provenance provenance) {
  check_weights(weights);
  const int d = static_cast<int>(weights.front().size());
  const int r = static_cast<int>(weights.size());

  std::vector<double> eps_grid;
  for (int p = opts.eps_pow_lo; p <= opts.eps_pow_hi; ++p) {
    eps_grid.push_back(std::ldexp(1.0, p));
    eps_grid.push_back(-std::ldexp(1.0, p));
  }

  auto distinct_projections = [&](const Eigen::VectorXd& e) {
    for (int i = 0; i < r; ++i)
      for (int j = i + 1; j < r; ++j)
        if (std::abs((weights[static_cast<std::size_t>(i)] - weights[static_cast<std::size_t>(j)])
                         .dot(e)) < opts.direction_gap)
          return false;
    return true;
  };

  auto is_new_point = [](const std::vector<Eigen::VectorXd>& pts, const Eigen::VectorXd& x) {
    for (const auto& p : pts)
      if ((p - x).norm() <= 1e-12) return false;
    return true;
  };

  std::vector<Eigen::VectorXd> points;
  std::vector<Eigen::VectorXd> rows;
  double best_overall = 0.0;

  for (int i = 0; i < n_rows; ++i) {
    double best = -1.0;
    Eigen::VectorXd best_x;
    for (int attempt = 0; attempt < opts.direction_tries; ++attempt) {
      Eigen::VectorXd e = rng.unit_vector(d);
      if (r > 1 && !distinct_projections(e)) continue;
      for (double eps : eps_grid) {
        Eigen::VectorXd x = eps * e;
        if (!is_new_point(points, x)) continue;
        Eigen::VectorXd row;
        try {
          row = row_fn(weights, x, act);
        } catch (const NumericsError&) {
          continue;
        }
        if (!row.allFinite()) continue;
        rows.push_back(row);
        double m = stack_margin(rows);
        rows.pop_back();
        if (m > best) {
          best = m;
          best_x = x;
        }
      }
      if (best > opts.margin_target * 10.0 && attempt >= 2) break;
    }
    if (best <= 0.0) throw ConstructError("sample construction found no usable row", best_overall);
    points.push_back(best_x);
    rows.push_back(row_fn(weights, best_x, act));
    best_overall = best;
  }

  // Exchange passes: retry each row slot against fresh candidates.
  for (int pass = 0; pass < opts.exchange_passes; ++pass) {
    double current = stack_margin(rows);
    if (current > opts.margin_target * 100.0) break;
    for (int i = 0; i < n_rows; ++i) {
      Eigen::VectorXd saved_row = rows[static_cast<std::size_t>(i)];
      Eigen::VectorXd saved_pt = points[static_cast<std::size_t>(i)];
      double best = current;
      Eigen::VectorXd best_x = saved_pt;
      for (int attempt = 0; attempt < opts.direction_tries / 2; ++attempt) {
        Eigen::VectorXd e = rng.unit_vector(d);
        if (r > 1 && !distinct_projections(e)) continue;
        for (double eps : eps_grid) {
          Eigen::VectorXd x = eps * e;
          if (!is_new_point(points, x)) continue;
          Eigen::VectorXd row;
          try {
            row = row_fn(weights, x, act);
          } catch (const NumericsError&) {
            continue;
          }
          if (!row.allFinite()) continue;
          rows[static_cast<std::size_t>(i)] = row;
          double m = stack_margin(rows);
          if (m > best * 1.05) {
            best = m;
            best_x = x;
          }
          rows[static_cast<std::size_t>(i)] = saved_row;
        }
      }
      if (best > current) {
        points[static_cast<std::size_t>(i)] = best_x;
        rows[static_cast<std::size_t>(i)] = row_fn(weights, best_x, act);
        current = best;
      }
    }
  }

  double final_margin = stack_margin(rows);
  if (final_margin <= opts.margin_target)
    throw ConstructError("sample construction stalled below margin target", final_margin);

  SampleSet out;
  out.points = std::move(points);
  out.provenance = provenance;
  return out;
}

}  // namespace

double SampleSet::min_pairwise_distance() const {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      gap = std::min(gap, (points[i] - points[j]).norm());
  return gap;
}

RankReport rank_report(const Eigen::MatrixXd& M, double tol) {
  if (tol <= 0.0) throw std::invalid_argument("rank tolerance must be positive");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  RankReport rep;
  rep.matrix_rows = static_cast<int>(M.rows());
  rep.matrix_cols = static_cast<int>(M.cols());
  rep.tolerance = tol;
  const auto& sv = svd.singularValues();
  rep.singular_values.assign(sv.data(), sv.data() + sv.size());
  double smax = rep.singular_values.empty() ? 0.0 : rep.singular_values.front();
  rep.numerical_rank = 0;
  for (double s : rep.singular_values)
    if (smax > 0.0 && s > tol * smax) ++rep.numerical_rank;
  rep.margin = (rep.numerical_rank > 0 && smax > 0.0)
                   ? rep.singular_values[static_cast<std::size_t>(rep.numerical_rank - 1)] / smax
                   : 0.0;
  return rep;
}

Eigen::MatrixXd type1_matrix(const std::vector<Eigen::VectorXd>& weights,
                             const std::vector<Eigen::VectorXd>& points,
                             const ActivationSpec& act) {
  if (points.empty()) throw std::invalid_argument("type1_matrix: at least one sample required");
  check_weights(weights);
  Eigen::MatrixXd M(points.size(), weights.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    M.row(static_cast<Eigen::Index>(i)) = type1_row(weights, points[i], act);
  return M;
}

Eigen::MatrixXd type2_matrix(const std::vector<Eigen::VectorXd>& weights,
                             const std::vector<Eigen::VectorXd>& points,
                             const ActivationSpec& act) {
  if (points.empty()) throw std::invalid_argument("type2_matrix: at least one sample required");
  check_weights(weights);
  const int d = static_cast<int>(points.front().size());
  Eigen::MatrixXd M(points.size(), weights.size() * (d + 1));
  for (std::size_t i = 0; i < points.size(); ++i)
    M.row(static_cast<Eigen::Index>(i)) = type2_row(weights, points[i], act);
  return M;
}

std::pair<bool, RankReport> is_type1(const std::vector<Eigen::VectorXd>& weights,
                                     const std::vector<Eigen::VectorXd>& points,
                                     const ActivationSpec& act, double tol) {
  const int r = static_cast<int>(weights.size());
  if (static_cast<int>(points.size()) < r)
    throw std::invalid_argument("is_type1: n >= r required");
  RankReport rep = rank_report(type1_matrix(weights, points, act), tol);
  return {rep.numerical_rank == r, rep};
}

std::pair<bool, RankReport> is_type2(const std::vector<Eigen::VectorXd>& weights,
                                     const std::vector<Eigen::VectorXd>& points,
                                     const ActivationSpec& act, double tol, int model_width) {
  const int r = static_cast<int>(weights.size());
  const int n = static_cast<int>(points.size());
  const int d = static_cast<int>(points.empty() ? 0 : points.front().size());
  const int m = model_width > 0 ? model_width : r;
  if (m < r) throw std::invalid_argument("is_type2: model width must be >= r");
  if (n < r || n > (d + 1) * m)
    throw std::invalid_argument("is_type2: sample count outside r <= n <= (d+1)m");
  RankReport rep = rank_report(type2_matrix(weights, points, act), tol);
  int full = std::min(n, (d + 1) * r);
  bool ok = rep.numerical_rank == full;
  if (ok) {
    auto [t1, rep1] = is_type1(weights, points, act, tol);
    ok = t1;
  }
  return {ok, rep};
}

SampleSet construct_type1(const std::vector<Eigen::VectorXd>& weights, const ActivationSpec& act,
                          Rng& rng, const ConstructOpts& opts) {
  SampleSet s = construct_impl(weights, act, rng, opts, static_cast<int>(weights.size()),
                               &type1_row, Provenance::ConstructedTypeI);
  return s;
}

SampleSet construct_type2(const std::vector<Eigen::VectorXd>& weights, const ActivationSpec& act,
                          Rng& rng, const ConstructOpts& opts) {
  const int d = static_cast<int>(weights.front().size());
  const int n = (d + 1) * static_cast<int>(weights.size());
  return construct_impl(weights, act, rng, opts, n, &type2_row, Provenance::ConstructedTypeII);
}

SampleSet perturb_samples(const SampleSet& base, double eps, Rng& rng) {
  if (eps < 0.0) throw std::invalid_argument("perturb_samples: eps >= 0 required");
  SampleSet out;
  out.provenance = Provenance::Perturbed;
  out.base_seed = base.seed;
  out.eps = eps;
  out.points.reserve(base.points.size());
  const int d = base.points.empty() ? 0 : static_cast<int>(base.points.front().size());
  for (const auto& p : base.points) {
    Eigen::VectorXd q = p;
    if (eps > 0.0) q += rng.in_ball(d, eps);
    out.points.push_back(std::move(q));
  }
  if (out.points.size() > 1 && out.min_pairwise_distance() <= 1e-12) {
    // A collision after perturbation has probability zero; nudge once more.
    for (auto& q : out.points)
      if (eps > 0.0) q += rng.in_ball(d, eps * 0.5);
  }
  return out;
}

SampleSet random_samples(int n, int d, double box, Rng& rng, std::uint64_t seed_label) {
  SampleSet out;
  out.provenance = Provenance::Random;
  out.seed = seed_label;
  out.points.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x;
    do {
      x = rng.uniform_vector(d, -box, box);
    } while (!out.points.empty() && [&] {
      for (const auto& p : out.points)
        if ((p - x).norm() <= 1e-12) return true;
      return false;
    }());
    out.points.push_back(std::move(x));
  }
  return out;
}

}  // namespace minima
