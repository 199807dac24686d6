/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace surroda {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Input or configuration rejected before any numerics ran (CLI exit code 1).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical procedure could not produce a result (CLI exit code 2).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Closed interval for one scalar parameter.
struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  double width() const { return upper - lower; }
  double center() const { return 0.5 * (lower + upper); }
  bool contains(double x, double rel_tol = 0.0) const {
    const double slack = rel_tol * width();
    return x >= lower - slack && x <= upper + slack;
  }
};

/// Deterministic pseudo-random stream (xoshiro256** seeded by splitmix64).
///
/// Streams are derived from a global seed and a name, so that sampling, noise,
/// splits and bootstrap draws never share state. The generators avoid the
/// standard distributions, whose output differs between library vendors.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lower, double upper) { return lower + (upper - lower) * uniform(); }
  /// Standard normal draw (Box-Muller, one value per call).
  double normal();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::uint64_t state_[4];
};

/// 64-bit FNV-1a hash, used for stream derivation and config fingerprints.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Runs body(i) for i in [0, count) on up to `workers` threads.
/// Exceptions from the body are rethrown on the calling thread (first one wins).
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& body);

/// Throws ValidationError if any entry is non-finite, naming its location.
void require_finite(const MatrixXd& m, std::string_view what);

/// Symmetric eigenvalue check with a readable rejection message.
double min_eigenvalue(const MatrixXd& symmetric);

}  // namespace surroda
