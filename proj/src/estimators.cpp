#include "heterospectra/estimators.hpp"

#include "heterospectra/error.hpp"

#include <cmath>
#include <string>

namespace heterospectra {
namespace {

EigOrder order_for(Truncation t) {
  return t == Truncation::algebraic ? EigOrder::algebraic : EigOrder::magnitude;
}

void require_rank(const Mat& ahat, Index r, const char* what) {
  require_symmetric(ahat);
  if (r < 1 || r >= ahat.rows()) {
    throw ParameterError(std::string(what) + ": rank " + std::to_string(r) +
                         " must lie in [1, " + std::to_string(ahat.rows() - 1) + "]");
  }
}

// Top-r eigenframe of `m`. `scale` is the magnitude of the original input; a
// retained eigenvalue that vanishes relative to it means there is no rank-r
// structure to return.
SubspaceEstimate top_frame(const Mat& m, Index r, Truncation truncation, double scale) {
  const Index k = std::min<Index>(r + 1, m.rows());
  SymEig eig = leading_eigs(m, k, order_for(truncation));
  const auto key = [&](Index j) {
    return truncation == Truncation::algebraic ? eig.values[j] : std::abs(eig.values[j]);
  };
  if (std::abs(eig.values[r - 1]) <= 1e-12 * scale) {
    throw DegenerateError("degenerate spectrum: eigenvalue " + std::to_string(r) +
                          " is zero, no rank-" + std::to_string(r) + " structure");
  }
  const bool gap_warning = k > r && key(r - 1) - key(r) < 1e-12 * std::abs(eig.values[0]);
  return SubspaceEstimate{
      .frame = Frame(eig.vectors.leftCols(r)),
      .eigenvalues = eig.values.head(r),
      .iterations = 0,
      .converged = true,
      .diag_trace = {},
      .gap_warning = gap_warning,
  };
}

}  // namespace

Mat gram(const Mat& mhat) {
  if (mhat.rows() < 1 || mhat.cols() < 1) throw ShapeError("gram: empty matrix");
  Mat a = Mat::Zero(mhat.rows(), mhat.rows());
  a.selfadjointView<Eigen::Lower>().rankUpdate(mhat);
  a.triangularView<Eigen::StrictlyUpper>() = a.transpose();
  return a;
}

SubspaceEstimate hetero_pca(const Mat& ahat, const HeteroPcaConfig& cfg,
                            const IterateObserver& observer) {
  require_rank(ahat, cfg.rank, "hetero_pca");
  if (!(cfg.tol > 0)) throw ParameterError("hetero_pca: tol must be positive");
  if (cfg.max_iter < 0) throw ParameterError("hetero_pca: max_iter must be nonnegative");

  const double scale = ahat.norm();
  const EigOrder order = order_for(cfg.truncation);
  Mat iterate = hollow(ahat);
  if (observer) observer(0, iterate);

  std::vector<double> trace;
  bool converged = false;
  Index t = 0;
  while (t < cfg.max_iter) {
    const SymEig eig = leading_eigs(iterate, cfg.rank, order);
    // Only the diagonal of the rank-r truncation is needed.
    const Vec imputed = eig.vectors.array().square().matrix() * eig.values;
    const double change = (imputed - iterate.diagonal()).cwiseAbs().maxCoeff();
    const double threshold = cfg.tol * (1.0 + iterate.diagonal().cwiseAbs().maxCoeff());
    iterate.diagonal() = imputed;
    trace.push_back(change);
    ++t;
    if (observer) observer(t, iterate);
    if (change <= threshold) {
      converged = true;
      break;
    }
  }

  SubspaceEstimate est = top_frame(iterate, cfg.rank, cfg.truncation, scale);
  est.iterations = t;
  est.converged = converged;
  est.diag_trace = std::move(trace);
  return est;
}

SubspaceEstimate diagonal_deletion_pca(const Mat& ahat, Index r, Truncation truncation) {
  require_rank(ahat, r, "diagonal_deletion_pca");
  return top_frame(hollow(ahat), r, truncation, ahat.norm());
}

SubspaceEstimate vanilla_pca(const Mat& ahat, Index r, Truncation truncation) {
  require_rank(ahat, r, "vanilla_pca");
  return top_frame(ahat, r, truncation, ahat.norm());
}

SubspaceEstimate idealized_oracle(const Mat& a, const Mat& z, Index r, Truncation truncation) {
  if (a.rows() != z.rows() || a.cols() != z.cols()) {
    throw ShapeError("idealized_oracle: A and Z shapes differ");
  }
  require_rank(a, r, "idealized_oracle");
  require_symmetric(z);
  const Mat target = a + hollow(z);
  return top_frame(target, r, truncation, std::max(a.norm(), target.norm()));
}

ConvergenceTrace convergence_trajectory(const Mat& ahat, const Mat& a, double lambda_r,
                                        const HeteroPcaConfig& cfg) {
  if (ahat.rows() != a.rows() || ahat.cols() != a.cols()) {
    throw ShapeError("convergence_trajectory: A-hat and A shapes differ");
  }
  if (!(lambda_r > 0)) throw ParameterError("convergence_trajectory: lambda_r must be positive");
  ConvergenceTrace trace;
  trace.gamma_z_norm = spectral_norm_sym(hollow(ahat - a));
  trace.rho = 10.0 * trace.gamma_z_norm / (lambda_r * lambda_r);
  hetero_pca(ahat, cfg, [&](Index t, const Mat& iterate) {
    const double dist = spectral_norm_sym(iterate - a);
    trace.distance_to_truth.push_back(dist);
    if (!trace.t0 && dist <= 3.0 * trace.gamma_z_norm) trace.t0 = t;
  });
  return trace;
}

}  // namespace heterospectra
