#include "heterospectra/matlin.hpp"

#include "heterospectra/error.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <string>

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

namespace heterospectra {
namespace {

// Worker threads in the Monte Carlo harness own the parallelism; keep the
// BLAS single-threaded so reductions do not depend on its pool size.
void pin_blas_threads() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (openblas_set_num_threads != nullptr) openblas_set_num_threads(1);
  });
}

void require_square(const Mat& a, std::string_view what) {
  if (a.rows() != a.cols()) {
    throw ShapeError(std::string(what) + ": expected a square matrix, got " +
                     std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

std::vector<Index> sorted_order(const Vec& values, EigOrder order) {
  std::vector<Index> idx(static_cast<std::size_t>(values.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  if (order == EigOrder::magnitude) {
    std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
      const double fa = std::abs(values[a]);
      const double fb = std::abs(values[b]);
      if (fa != fb) return fa > fb;
      return values[a] > values[b];
    });
  } else {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](Index a, Index b) { return values[a] > values[b]; });
  }
  return idx;
}

SymEig reorder(const SymEig& eig, EigOrder order, Index keep) {
  const auto idx = sorted_order(eig.values, order);
  SymEig out;
  out.values.resize(keep);
  out.vectors.resize(eig.vectors.rows(), keep);
  for (Index j = 0; j < keep; ++j) {
    out.values[j] = eig.values[idx[static_cast<std::size_t>(j)]];
    out.vectors.col(j) = eig.vectors.col(idx[static_cast<std::size_t>(j)]);
  }
  normalize_signs(out.vectors);
  return out;
}

SymEig jacobi_eig(const Mat& input, const EigOptions& opts) {
  const Index n = input.rows();
  Mat a = 0.5 * (input + input.transpose());
  Mat v = Mat::Identity(n, n);
  const double threshold = opts.tol * a.norm();

  auto max_off_diagonal = [&] {
    double m = 0.0;
    for (Index q = 0; q < n; ++q)
      for (Index p = 0; p < q; ++p) m = std::max(m, std::abs(a(p, q)));
    return m;
  };

  bool converged = false;
  for (int sweep = 0; sweep <= opts.max_sweeps; ++sweep) {
    if (max_off_diagonal() <= threshold) {
      converged = true;
      break;
    }
    if (sweep == opts.max_sweeps) break;
    for (Index p = 0; p < n - 1; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        Eigen::JacobiRotation<double> rot;
        if (!rot.makeJacobi(a, p, q)) continue;
        a.applyOnTheLeft(p, q, rot.adjoint());
        a.applyOnTheRight(p, q, rot);
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        v.applyOnTheRight(p, q, rot);
      }
    }
  }
  if (!converged) {
    throw ConvergenceError("sym_eig: Jacobi sweeps did not converge after " +
                               std::to_string(opts.max_sweeps) + " sweeps",
                           max_off_diagonal());
  }
  return SymEig{a.diagonal(), std::move(v)};
}

// LAPACK dsyevr; `count` < n selects the `count` largest algebraic eigenvalues.
SymEig lapack_eig(const Mat& input, Index count, bool want_vectors) {
  pin_blas_threads();
  const auto n = static_cast<lapack_int>(input.rows());
  Mat a = input;
  const bool subset = count < input.rows();
  Vec w(input.rows());
  Mat z(want_vectors ? input.rows() : 1, want_vectors ? (subset ? count : input.rows()) : 1);
  std::vector<lapack_int> isuppz(2 * static_cast<std::size_t>(std::max<Index>(1, input.rows())));
  lapack_int found = 0;
  const lapack_int il = subset ? n - static_cast<lapack_int>(count) + 1 : 1;
  const lapack_int info = LAPACKE_dsyevr(
      LAPACK_COL_MAJOR, want_vectors ? 'V' : 'N', subset ? 'I' : 'A', 'L', n, a.data(), n,
      0.0, 0.0, il, n, 0.0, &found, w.data(), z.data(),
      static_cast<lapack_int>(z.rows()), isuppz.data());
  if (info != 0) {
    throw ConvergenceError("sym_eig: LAPACK dsyevr failed with info " + std::to_string(info),
                           static_cast<double>(info));
  }
  SymEig out;
  out.values = w.head(found);
  if (want_vectors) out.vectors = z.leftCols(found);
  return out;
}

}  // namespace

Mat mat_from_row_major(Index rows, Index cols, std::span<const double> data) {
  if (rows < 0 || cols < 0 || static_cast<Index>(data.size()) != rows * cols) {
    throw ShapeError("matrix data length " + std::to_string(data.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Mat m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = data[static_cast<std::size_t>(i * cols + j)];
  require_finite(m, "matrix");
  return m;
}

std::vector<double> to_row_major(const Mat& a) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(a.size()));
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j) out.push_back(a(i, j));
  return out;
}

void require_finite(const Mat& a, std::string_view what) {
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      if (!std::isfinite(a(i, j))) {
        throw ParameterError(std::string(what) + ": non-finite entry at (" + std::to_string(i) +
                             ", " + std::to_string(j) + ")");
      }
    }
  }
}

Frame::Frame(Mat cols) : cols_(std::move(cols)) {
  if (cols_.cols() < 1 || cols_.rows() < cols_.cols()) {
    throw ShapeError("Frame: need n >= r >= 1, got " + std::to_string(cols_.rows()) + "x" +
                     std::to_string(cols_.cols()));
  }
  require_finite(cols_, "Frame");
  const double err =
      (cols_.transpose() * cols_ - Mat::Identity(cols_.cols(), cols_.cols())).cwiseAbs().maxCoeff();
  if (err > kOrthonormalTol) {
    throw ShapeError("Frame: columns are not orthonormal (max |F^T F - I| = " +
                     std::to_string(err) + ")");
  }
}

Frame Frame::orthonormalize(const Mat& m) {
  if (m.cols() < 1 || m.rows() < m.cols()) {
    throw ShapeError("orthonormalize: need rows >= cols >= 1");
  }
  Eigen::HouseholderQR<Mat> qr(m);
  Mat q = qr.householderQ() * Mat::Identity(m.rows(), m.cols());
  const Vec diag = qr.matrixQR().diagonal().head(m.cols());
  const double scale = diag.cwiseAbs().maxCoeff();
  for (Index j = 0; j < m.cols(); ++j) {
    if (!(std::abs(diag[j]) > 1e-12 * scale)) {
      throw DegenerateError("orthonormalize: columns are linearly dependent");
    }
    if (diag[j] < 0) q.col(j) = -q.col(j);
  }
  return Frame(std::move(q));
}

Frame Frame::rotated(const Mat& o) const { return Frame(cols_ * o); }

Mat hollow(const Mat& a) {
  require_square(a, "hollow");
  Mat out = a;
  out.diagonal().setZero();
  return out;
}

Mat diag_part(const Mat& a) {
  require_square(a, "diag_part");
  Mat out = Mat::Zero(a.rows(), a.cols());
  out.diagonal() = a.diagonal();
  return out;
}

double max_asymmetry(const Mat& a) {
  double m = 0.0;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = j + 1; i < a.rows(); ++i) m = std::max(m, std::abs(a(i, j) - a(j, i)));
  return m;
}

void require_symmetric(const Mat& a, double tol) {
  require_square(a, "symmetric input");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = max_asymmetry(a);
  if (asym > tol * scale) {
    throw ShapeError("matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  }
}

void normalize_signs(Mat& vectors) {
  for (Index j = 0; j < vectors.cols(); ++j) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < vectors.rows(); ++i) {
      const double v = std::abs(vectors(i, j));
      if (v > best_abs) {
        best_abs = v;
        best = i;
      }
    }
    if (vectors.rows() > 0 && vectors(best, j) < 0) vectors.col(j) = -vectors.col(j);
  }
}

SymEig sym_eig(const Mat& a, const EigOptions& opts) {
  require_symmetric(a);
  if (!(opts.tol > 0)) throw ParameterError("sym_eig: tol must be positive");
  require_finite(a, "sym_eig");
  const Index n = a.rows();
  if (n == 0) return {};
  const bool use_jacobi = opts.method == EigMethod::jacobi ||
                          (opts.method == EigMethod::automatic && n <= kJacobiMaxDim);
  SymEig raw = use_jacobi ? jacobi_eig(a, opts) : lapack_eig(a, n, true);
  return reorder(raw, EigOrder::magnitude, n);
}

SymEig leading_eigs(const Mat& a, Index k, EigOrder order) {
  require_symmetric(a);
  const Index n = a.rows();
  if (k < 1 || k > n) {
    throw ParameterError("leading_eigs: k = " + std::to_string(k) + " outside [1, " +
                         std::to_string(n) + "]");
  }
  if (n <= kJacobiMaxDim || order == EigOrder::magnitude) {
    return reorder(sym_eig(a), order, k);
  }
  require_finite(a, "leading_eigs");
  return reorder(lapack_eig(a, k, true), EigOrder::algebraic, k);
}

Mat best_rank_r(const Mat& a, Index r) {
  require_square(a, "best_rank_r");
  if (r < 1 || r > a.rows()) {
    throw ParameterError("best_rank_r: r = " + std::to_string(r) + " outside [1, " +
                         std::to_string(a.rows()) + "]");
  }
  const SymEig eig = leading_eigs(a, r, EigOrder::magnitude);
  return eig.vectors * eig.values.asDiagonal() * eig.vectors.transpose();
}

Mat psd_sqrt(const Mat& s, double clamp_tol) {
  const SymEig eig = sym_eig(s);
  if (eig.values.size() == 0) return Mat(0, 0);
  const double top = eig.values.maxCoeff();
  const double window = clamp_tol * std::max(1.0, top);
  Vec root(eig.values.size());
  for (Index i = 0; i < eig.values.size(); ++i) {
    const double v = eig.values[i];
    if (v < -window) throw NotPsdError("psd_sqrt: matrix is not positive semidefinite", v);
    root[i] = v > 0 ? std::sqrt(v) : 0.0;
  }
  Mat r = eig.vectors * root.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (r + r.transpose());
}

Mat procrustes(const Frame& uhat, const Frame& u) {
  if (uhat.n() != u.n() || uhat.r() != u.r()) {
    throw ShapeError("procrustes: frame shapes differ");
  }
  const Mat c = uhat.cols().transpose() * u.cols();
  const SymEig eig = sym_eig(c.transpose() * c, EigOptions{.method = EigMethod::jacobi});
  const Index r = c.cols();
  Vec inv_sv(r);
  for (Index j = 0; j < r; ++j) {
    const double sv = std::sqrt(std::max(0.0, eig.values[j]));
    if (sv < 1e-12) {
      throw DegenerateError("procrustes: uhat^T u is rank deficient (singular value " +
                            std::to_string(sv) + ")");
    }
    inv_sv[j] = 1.0 / sv;
  }
  return c * eig.vectors * inv_sv.asDiagonal() * eig.vectors.transpose();
}

double sin_theta(const Frame& u1, const Frame& u2) {
  if (u1.n() != u2.n() || u1.r() != u2.r()) {
    throw ShapeError("sin_theta: frame shapes differ");
  }
  // For equal ranks the spectral norm of U1U1^T - U2U2^T equals that of
  // (I - U1U1^T)U2, which stays accurate when the subspaces nearly coincide.
  const Mat resid = u2.cols() - u1.cols() * (u1.cols().transpose() * u2.cols());
  const double s = Eigen::JacobiSVD<Mat>(resid).singularValues()(0);
  return std::clamp(s, 0.0, 1.0);
}

double two_inf_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  return a.rowwise().norm().maxCoeff();
}

double incoherence_mu0(const Frame& u, const Frame& v) {
  if (u.r() != v.r()) throw ShapeError("incoherence_mu0: U and V have different ranks");
  const double r = static_cast<double>(u.r());
  return std::max(two_inf_norm(u.cols()) * std::sqrt(static_cast<double>(u.n()) / r),
                  two_inf_norm(v.cols()) * std::sqrt(static_cast<double>(v.n()) / r));
}

double spectral_norm_sym(const Mat& a) {
  require_symmetric(a);
  if (a.rows() == 0) return 0.0;
  if (a.rows() <= kJacobiMaxDim) return sym_eig(a).values.cwiseAbs().maxCoeff();
  require_finite(a, "spectral_norm_sym");
  return lapack_eig(a, a.rows(), false).values.cwiseAbs().maxCoeff();
}

}  // namespace heterospectra
