#pragma once

#include "heterospectra/matlin.hpp"

#include <random>

namespace testsupport {

using heterospectra::Index;
using heterospectra::Mat;
using heterospectra::Vec;

inline Mat gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  Mat a(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) a(i, j) = nd(gen);
  return a;
}

inline Mat random_symmetric(Index n, std::uint64_t seed) {
  const Mat g = gaussian(n, n, seed);
  return 0.5 * (g + g.transpose());
}

/// Orthonormal n x r columns from a Householder QR (independent of the library's own QR path).
inline Mat random_orthonormal(Index n, Index r, std::uint64_t seed) {
  Eigen::HouseholderQR<Mat> qr(gaussian(n, r, seed));
  return qr.householderQ() * Mat::Identity(n, r);
}

inline double rel_fro(const Mat& a, const Mat& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

}  // namespace testsupport
