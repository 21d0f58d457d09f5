#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace minima {

// Seeded RNG with self-contained value transforms. std::mt19937_64's output
// sequence is pinned by the standard, and we avoid std::*_distribution
// (implementation-defined), so identical seeds give identical draws on any
// platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  double normal() {
    // Box-Muller; one value per call keeps the stream position predictable.
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  Eigen::VectorXd uniform_vector(int d, double lo, double hi) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = uniform(lo, hi);
    return v;
  }

  Eigen::VectorXd unit_vector(int d) {
    Eigen::VectorXd v(d);
    double n = 0.0;
    do {
      for (int i = 0; i < d; ++i) v[i] = normal();
      n = v.norm();
    } while (n < 1e-12);
    return v / n;
  }

  // Uniform in the closed ball of given radius.
  Eigen::VectorXd in_ball(int d, double radius) {
    Eigen::VectorXd dir = unit_vector(d);
    double u = uniform01();
    return dir * (radius * std::pow(u, 1.0 / static_cast<double>(d)));
  }

  // Independent child stream; decorrelates the seeds of parallel trials.
  Rng child(std::uint64_t stream) {
    std::uint64_t s = engine_();
    return Rng(s ^ (0x9e3779b97f4a7c15ULL * (stream + 1)));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace minima
