#pragma once

// Entrywise distribution theory for the aligned estimator U-hat O - U: the
// per-entry standard deviations, the limiting row covariances S_i and their
// within-class plug-in estimates, pivots, chi-square confidence ellipses and
// the assumption diagnostics.

#include "heterospectra/matlin.hpp"
#include "heterospectra/synthgen.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace heterospectra {

/// lambda_r / (sigma sqrt(r d)).
double snr(const Vec& lambdas, double sigma, Index r, Index d);

/// sqrt(V_j^T Sigma_i V_j) / lambda_j for the 0-based column j.
double entry_sd(const Mat& sigma_i, const Frame& v, const Vec& lambdas, Index j);

/// Lambda^-1 V^T Sigma_i V Lambda^-1.
Mat limiting_cov(const Mat& sigma_i, const Frame& v, const Vec& lambdas);

struct EntrywiseLaw {
  Mat sigma;                    ///< n x r grid of entry standard deviations
  std::vector<Mat> per_class_s;  ///< one r x r limiting covariance per class
};

/// Law for every row of the signal, with class k covariance class_sigmas[k].
EntrywiseLaw entrywise_law(const SignalModel& signal, std::span<const Mat> class_sigmas);

struct ClassCovEstimate {
  std::vector<Vec> centroids;
  std::vector<Mat> s_hat;
  std::vector<Index> counts;
};

/// Within-class means and (1/n_k)-normalized covariances of the rows of `uhat`.
ClassCovEstimate class_cov_estimate(const Mat& uhat, std::span<const Index> labels);

/// Labels for estimate-only use: farthest-point seeds on the rows, one
/// assignment, one recentring and a final reassignment. Label order follows
/// the order in which seeds were picked (row 0 seeds label 0).
std::vector<Index> nearest_centroid_labels(const Mat& uhat, Index classes);

/// Row i is (S-hat^(k))^{-1/2} (U-hat_i - U-bar^(k)) for k = labels[i].
Mat pivots(const Mat& uhat, const ClassCovEstimate& est, std::span<const Index> labels);

/// Quantile of the chi-square law with df degrees of freedom.
double chi2_quantile(int df, double level);

struct Ellipse {
  Mat polyline;  ///< points x 2, counterclockwise, not closed
  Vec axes;      ///< semi-axis lengths, major first
  double angle = 0.0;  ///< radians, direction of the major axis
  Vec center;
};

/// Boundary of {x : (x - c)^T cov^{-1} (x - c) = chi2_quantile(2, level)}.
Ellipse ellipse(const Mat& cov, double level, Index points, const Vec& center = Vec::Zero(2));

/// Area of the symmetric difference over the area of the union, for two
/// convex polylines.
double ellipse_mismatch(const Ellipse& a, const Ellipse& b);

/// Signed shoelace area of a closed polygon given as points x 2.
double polygon_area(const Mat& poly);

struct Margin {
  std::string name;
  std::string assumption;
  double value = 0.0;
  std::optional<bool> pass;  ///< empty for informational scaling terms
};

struct Diagnostics {
  double kappa = 0.0;
  double mu0 = 0.0;
  double sigma = 0.0;
  double snr = 0.0;
  double kappa_sigma = 0.0;
  double kappa_sigma_upper = 0.0;  ///< max_{i,j} sigma / ||Sigma_i^{1/2} V_j||
  double kappa_sigma_lower = 0.0;  ///< min_{i,j} sigma_i / ||Sigma_i^{1/2} V_j||
  std::vector<Margin> margins;
  Index n = 0;
  Index d = 0;
  Index r = 0;
};

/// Condition numbers, noise level and assumption margins. Noise levels use
/// sigma_i^2 = ||Sigma_i|| and sigma^2 = max_i ||Sigma_i||.
Diagnostics diagnostics(const SignalModel& signal, std::span<const RealizedCov> covs);

}  // namespace heterospectra
