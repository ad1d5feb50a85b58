#pragma once

// Singular-subspace estimators built on the Gram matrix A-hat = M-hat M-hat^T:
// HeteroPCA (iterative diagonal re-imputation), diagonal deletion, vanilla PCA,
// and the simulation-only idealized oracle A + hollow(Z).

#include "heterospectra/matlin.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace heterospectra {

/// Which r eigenpairs form the rank-r truncation.
enum class Truncation {
  algebraic,  ///< r largest eigenvalues (default; the target A is PSD)
  magnitude,  ///< r largest |eigenvalues|, the literal two-sided SVD truncation
};

struct HeteroPcaConfig {
  Index rank = 1;
  Index max_iter = 100;
  double tol = 1e-8;
  Truncation truncation = Truncation::algebraic;
};

struct SubspaceEstimate {
  Frame frame;
  Vec eigenvalues;  ///< top-r eigenvalues of the final iterate (lambda-hat^2 scale)
  Index iterations = 0;
  bool converged = false;
  std::vector<double> diag_trace;  ///< max |diagonal change| per iteration
  bool gap_warning = false;        ///< r-th and (r+1)-th eigenvalues nearly tie
};

/// M-hat M-hat^T, exactly symmetric.
Mat gram(const Mat& mhat);

/// Called with each iterate N_T (T = 0 is hollow(A-hat)) before it is truncated.
using IterateObserver = std::function<void(Index iteration, const Mat& iterate)>;

SubspaceEstimate hetero_pca(const Mat& ahat, const HeteroPcaConfig& cfg,
                            const IterateObserver& observer = {});

SubspaceEstimate diagonal_deletion_pca(const Mat& ahat, Index r,
                                       Truncation truncation = Truncation::algebraic);

SubspaceEstimate vanilla_pca(const Mat& ahat, Index r,
                             Truncation truncation = Truncation::algebraic);

/// Top-r eigenframe of A + hollow(Z). Needs the truth, so simulation only.
SubspaceEstimate idealized_oracle(const Mat& a, const Mat& z, Index r,
                                  Truncation truncation = Truncation::algebraic);

/// HeteroPCA's distance to the truth along the iteration: ||N_T - A|| per
/// iterate, rho = 10 ||hollow(Z)|| / lambda_r^2 and T0, the first iteration
/// with ||N_T - A|| <= 3 ||hollow(Z)||.
struct ConvergenceTrace {
  std::vector<double> distance_to_truth;
  double gamma_z_norm = 0.0;
  double rho = 0.0;
  std::optional<Index> t0;
};

ConvergenceTrace convergence_trajectory(const Mat& ahat, const Mat& a, double lambda_r,
                                        const HeteroPcaConfig& cfg);

}  // namespace heterospectra
