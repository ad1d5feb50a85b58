#pragma once

// Dense real matrix primitives: symmetric eigendecomposition, truncation,
// PSD square roots, Procrustes alignment and subspace norms.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace heterospectra {

using Index = Eigen::Index;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Builds a matrix from row-major data; throws ShapeError on a length mismatch
/// and ParameterError on non-finite entries.
Mat mat_from_row_major(Index rows, Index cols, std::span<const double> data);
std::vector<double> to_row_major(const Mat& a);
void require_finite(const Mat& a, std::string_view what);

/// An n x r matrix with orthonormal columns (U, V, U-hat).
class Frame {
 public:
  static constexpr double kOrthonormalTol = 1e-10;

  /// Throws ShapeError unless cols^T cols = I within kOrthonormalTol.
  explicit Frame(Mat cols);

  /// Thin-QR orthonormalization with positive R diagonal. Throws DegenerateError
  /// when the input columns are numerically dependent.
  static Frame orthonormalize(const Mat& m);

  Index n() const { return cols_.rows(); }
  Index r() const { return cols_.cols(); }
  const Mat& cols() const { return cols_; }
  Frame rotated(const Mat& o) const;

 private:
  Mat cols_;
};

/// Eigenpairs of a symmetric matrix. For full decompositions values are sorted
/// by descending absolute value; each vector's largest-magnitude entry (lowest
/// index on ties) is nonnegative.
struct SymEig {
  Vec values;
  Mat vectors;
};

enum class EigMethod { automatic, jacobi, tridiagonal };
enum class EigOrder { magnitude, algebraic };

struct EigOptions {
  double tol = 1e-12;
  int max_sweeps = 100;
  EigMethod method = EigMethod::automatic;
};

/// Largest size handled by the Jacobi path under EigMethod::automatic.
inline constexpr Index kJacobiMaxDim = 256;

Mat hollow(const Mat& a);
Mat diag_part(const Mat& a);

/// max |a_ij - a_ji|.
double max_asymmetry(const Mat& a);
/// Throws ShapeError if `a` is not square or its asymmetry exceeds tol * max(1, max|a_ij|).
void require_symmetric(const Mat& a, double tol = 1e-9);

SymEig sym_eig(const Mat& a, const EigOptions& opts = {});

/// The k leading eigenpairs in the requested order (descending |value| or
/// descending value). Vectors follow the sym_eig sign convention.
SymEig leading_eigs(const Mat& a, Index k, EigOrder order);

/// Sum of the r eigenpairs of largest |eigenvalue| with signs retained.
Mat best_rank_r(const Mat& a, Index r);

Mat psd_sqrt(const Mat& s, double clamp_tol = 1e-10);

/// Orthogonal O minimizing ||uhat O - u||_F.
Mat procrustes(const Frame& uhat, const Frame& u);

/// ||U1 U1^T - U2 U2^T|| (spectral norm).
double sin_theta(const Frame& u1, const Frame& u2);

/// Maximum Euclidean row norm.
double two_inf_norm(const Mat& a);

double incoherence_mu0(const Frame& u, const Frame& v);

/// Largest |eigenvalue| of a symmetric matrix.
double spectral_norm_sym(const Mat& a);

/// Applies the sign convention in place to every column.
void normalize_signs(Mat& vectors);

}  // namespace heterospectra
