#pragma once

// Seeded Monte Carlo experiments over a mixture spec: per-replicate datasets,
// subspace estimates, Procrustes-aligned error rows, KS and pivot coverage
// statistics, method comparisons and noise/signal scaling fits.
//
// Seeds: replicate t draws its noise from substream(base_seed, replicate, t);
// the covariance factors come from substream(design_seed, design) and are
// shared by every replicate. Results are merged by replicate index, so the
// summary does not depend on the number of worker threads.

#include "heterospectra/estimators.hpp"
#include "heterospectra/inference.hpp"
#include "heterospectra/synthgen.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace heterospectra {

enum class Method { hetero, deletion, vanilla, oracle };

std::string_view method_name(Method m);
/// Throws ParameterError for an unknown name.
Method parse_method(std::string_view name);

struct ExperimentConfig {
  MixtureSpec spec;
  Index rank = 2;
  Index replicates = 1;
  std::uint64_t base_seed = 0;
  /// The first method drives the recorded rows, KS and coverage.
  std::vector<Method> methods{Method::hetero};
  std::vector<Index> rows{0};
  std::vector<Index> cols;  ///< empty means every column
  double level = 0.95;
  double noise_scale = 1.0;
  double signal_scale = 1.0;
  HeteroPcaConfig hetero;  ///< rank is taken from `rank`
  bool track_convergence = false;
  unsigned threads = 1;
  std::optional<std::uint64_t> design_seed;  ///< defaults to base_seed
  Index ellipse_points = 256;

  void validate() const;
};

struct AlignedRows {
  Mat o;       ///< Procrustes rotation
  Mat error;   ///< U-hat O - U, all rows
  Mat raw;     ///< requested rows of `error`
  Mat scaled;  ///< the same rows times Lambda
};

AlignedRows align_and_extract(const Frame& uhat, const SignalModel& signal,
                              std::span<const Index> rows);

/// sup_x |F_n(x) - Phi(x)| for the empirical CDF F_n.
double ks_stat(std::span<const double> samples);

struct ErrorRow {
  Index replicate = 0;
  Index row = 0;
  Vec raw;
  Vec scaled;
};

struct ReplicateRecord {
  Index replicate = 0;
  bool ok = false;
  std::string error;
  std::vector<double> l2inf;  ///< per method
  /// [method][class] norm of the class mean of the aligned error rows
  std::vector<std::vector<double>> class_centroid_error;
  /// [method][class] mean Euclidean norm of the aligned error rows
  std::vector<std::vector<double>> class_mean_row_error;
  std::vector<Index> iterations;  ///< per method (0 for one-shot methods)
  /// per class, first method: ||S^-1 O^T S-hat O - I|| and its symmetric
  /// whitened form ||S^-1/2 O^T S-hat O S^-1/2 - I||
  std::vector<double> cov_consistency;
  std::vector<double> cov_consistency_whitened;
  Index pivots_inside = 0;
  Index pivots_total = 0;
  std::optional<double> rho;
  std::optional<Index> t0;
};

struct KsEntry {
  Index row = 0;
  Index col = 0;
  Index samples = 0;
  double ks = 0.0;
};

struct EllipseRecord {
  Index row = 0;
  Ellipse theoretical;
  Ellipse empirical;
  double mismatch = 0.0;
};

struct McSummary {
  std::vector<Method> methods;
  Index rank = 0;
  double level = 0.95;
  std::vector<Index> tracked_rows;
  std::vector<Index> tracked_cols;
  Vec lambdas;
  std::vector<ErrorRow> rows;
  std::vector<KsEntry> ks;
  std::optional<double> coverage;
  std::string coverage_flag;  ///< why coverage is undefined, if it is
  std::vector<ReplicateRecord> replicates;
  std::vector<EllipseRecord> ellipses;
  Index failures = 0;

  /// l2,inf errors of method index m over the successful replicates.
  std::vector<double> l2inf_of(std::size_t m) const;
};

McSummary run_experiment(const ExperimentConfig& cfg);

struct MethodStats {
  Method method = Method::hetero;
  double median_l2inf = 0.0;
  double q25_l2inf = 0.0;
  double q75_l2inf = 0.0;
  std::vector<double> median_class_centroid_error;
  std::vector<double> median_class_mean_row_error;
};

struct MethodComparison {
  std::vector<MethodStats> methods;
  McSummary summary;
};

MethodComparison method_comparison(const ExperimentConfig& cfg);

enum class ScalingKind { noise, signal };

struct ScalingPoint {
  double scale = 0.0;
  double median_l2inf = 0.0;
  double snr_margin = 0.0;
  bool in_regime = false;
};

struct ScalingResult {
  ScalingKind kind = ScalingKind::noise;
  std::vector<ScalingPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  std::vector<std::string> warnings;
};

/// Median l2,inf error of the first method at each grid value, with the
/// least-squares slope of log error against log scale. `noise` multiplies
/// the noise, `signal` multiplies M.
ScalingResult scaling_study(const ExperimentConfig& cfg, std::span<const double> grid,
                            ScalingKind kind);

double median(std::vector<double> values);
double quantile(std::vector<double> values, double p);

/// Writes rows.csv, ks.csv, coverage.json, l2inf.csv and, for rank 2, the
/// ellipse polylines. Returns the paths written.
std::vector<std::filesystem::path> export_summary(const McSummary& s,
                                                  const std::filesystem::path& dir);

std::filesystem::path export_slopes(std::span<const ScalingResult> results,
                                    const std::filesystem::path& dir);

}  // namespace heterospectra
