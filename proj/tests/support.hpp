#pragma once

#include "riemmix/objective.hpp"
#include "riemmix/product.hpp"
#include "riemmix/spd.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <random>

namespace testing {

using riemmix::Matrix;
using riemmix::Vector;

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng);
  }
  return m;
}

inline Matrix random_symmetric(Eigen::Index d, std::mt19937_64& rng, double scale = 1.0) {
  const Matrix a = random_matrix(d, d, rng, scale);
  return 0.5 * (a + a.transpose());
}

inline riemmix::SpdPoint random_spd(Eigen::Index d, std::mt19937_64& rng, double shift = 0.5) {
  const Matrix a = random_matrix(d, d, rng) / std::sqrt(static_cast<double>(d));
  return riemmix::SpdPoint(a * a.transpose() + shift * Matrix::Identity(d, d));
}

inline riemmix::TangentVector random_tangent(Eigen::Index d, std::mt19937_64& rng, double scale = 1.0) {
  return riemmix::TangentVector(random_symmetric(d, rng, scale));
}

inline riemmix::GmmParams random_params(std::size_t K, Eigen::Index d, std::mt19937_64& rng) {
  riemmix::GmmParams p;
  for (std::size_t j = 0; j < K; ++j) p.components.push_back(random_spd(d + 1, rng));
  p.logits = random_matrix(static_cast<Eigen::Index>(K) - 1, 1, rng, 0.5);
  return p;
}

inline riemmix::GmmTangent random_product_tangent(const riemmix::GmmParams& p, std::mt19937_64& rng,
                                                  double scale = 1.0) {
  riemmix::GmmTangent t;
  for (const auto& c : p.components) t.components.push_back(random_tangent(c.dim(), rng, scale));
  t.logit_dirs = random_matrix(p.logits.size(), 1, rng, scale);
  return t;
}

/// Rows drawn around K centers spaced `gap` apart along the first axis.
inline Matrix clustered_data(Eigen::Index n, Eigen::Index d, std::size_t K, double gap, std::mt19937_64& rng) {
  Matrix x = random_matrix(n, d, rng);
  for (Eigen::Index i = 0; i < n; ++i) x(i, 0) += gap * static_cast<double>(static_cast<std::size_t>(i) % K);
  return x;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

inline double rel_diff(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace testing
