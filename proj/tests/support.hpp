/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>

#include "surroda/common.hpp"

namespace surroda::testing {

inline MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

inline VectorXd random_vector(Eigen::Index n, Rng& rng) { return random_matrix(n, 1, rng).col(0); }

/// Orthonormal columns from a QR factorization of a gaussian matrix.
inline MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::HouseholderQR<MatrixXd> qr(random_matrix(rows, cols, rng));
  return qr.householderQ() * MatrixXd::Identity(rows, cols);
}

inline MatrixXd random_spd(Eigen::Index n, Rng& rng) {
  const MatrixXd a = random_matrix(n, n, rng);
  return a * a.transpose() + static_cast<double>(n) * MatrixXd::Identity(n, n);
}

/// Central differences of a scalar function with per-component steps.
inline VectorXd central_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                 const VectorXd& h) {
  VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x, xm = x;
    xp(i) += h(i);
    xm(i) -= h(i);
    g(i) = (f(xp) - f(xm)) / (2.0 * h(i));
  }
  return g;
}

inline double relative_error(const VectorXd& a, const VectorXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("surroda_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace surroda::testing
