#pragma once

// Ground-truth mixture signals, per-class noise covariances and seeded noise
// sampling, with named presets for the mixture experiments.

#include "heterospectra/matlin.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace heterospectra {

enum class NoiseDriver { gaussian, rademacher };

namespace cov {

/// variance * I
struct Spherical {
  double variance = 1.0;
};

/// scale * F F^T + ridge * I with F uniform on the d x stiefel_dim Stiefel manifold.
struct LowRankPlusIdentity {
  double scale = 1.0;
  Index stiefel_dim = 1;
  double ridge = 1.0;
};

struct Explicit {
  Mat sigma;
};

/// scale * V V^T + ridge * I, V the right singular frame of the signal.
struct ProjectorPlusIdentity {
  double scale = 1.0;
  double ridge = 1.0;
};

/// F F^T + ridge * I with F square, entries i.i.d. uniform on [0, upper].
struct UniformFactorPlusIdentity {
  double upper = 0.0;
  double ridge = 1.0;
};

/// scale * V1 V1^T + scale * w w^T + ridge * I with w = build_v2_theta(theta).
struct SignalAngle {
  double scale = 1.0;
  double theta = 1.0;
  double ridge = 1.0;
};

}  // namespace cov

using CovSpec = std::variant<cov::Spherical, cov::LowRankPlusIdentity, cov::Explicit,
                             cov::ProjectorPlusIdentity, cov::UniformFactorPlusIdentity,
                             cov::SignalAngle>;

struct MixtureSpec {
  Index d = 0;
  std::vector<Index> sizes;
  std::vector<Vec> means;
  std::vector<CovSpec> covs;
  NoiseDriver noise_driver = NoiseDriver::gaussian;
  std::string description;

  Index n() const;
  Index classes() const { return static_cast<Index>(sizes.size()); }
  /// Throws ParameterError on inconsistent sizes, nonfinite means or negative scales.
  void validate() const;
};

struct SignalModel {
  Mat m;
  Frame u;
  Vec lambdas;
  Frame v;
  std::vector<Index> labels;

  Index rank() const { return lambdas.size(); }
  Index classes() const;
  /// The same model with M scaled by c (lambdas scale, frames unchanged).
  SignalModel scaled(double c) const;
};

struct RealizedCov {
  Mat sigma;
  Mat root;
  std::optional<double> spherical_sd;  ///< set when root = sd * I
};

struct Dataset {
  SignalModel signal;
  Mat e;
  Mat mhat;
  std::uint64_t seed = 0;
};

/// d x m matrix with orthonormal columns, uniform (Haar) in law.
Mat sample_stiefel(Index d, Index m, std::uint64_t seed);

/// Thin decomposition of the stacked class means.
SignalModel build_signal(const MixtureSpec& spec);

RealizedCov realize_cov(const CovSpec& spec, const SignalModel& signal, Index k,
                        std::uint64_t seed);

/// One realized covariance per class; class k draws from substream(seed, design, k).
std::vector<RealizedCov> realize_covs(const MixtureSpec& spec, const SignalModel& signal,
                                      std::uint64_t seed);

/// Row i is root(class(i)) Y_i with Y_i drawn from substream(seed, row, i).
Mat sample_noise(const SignalModel& signal, std::span<const RealizedCov> covs,
                 NoiseDriver driver, std::uint64_t seed);

/// Unit vector orthogonal to V_1 with <w, V_2> = theta.
Vec build_v2_theta(const SignalModel& signal, double theta, std::uint64_t seed);

struct PresetOptions {
  std::optional<Index> n;
  std::optional<Index> d;
  double theta = 0.5;
};

/// figure1, figure2, elliptical, spherical_reference or angle.
MixtureSpec preset(std::string_view name, const PresetOptions& opts = {});

/// Signal, realized covariances (design stream of `seed`) and one noise draw.
Dataset generate(const MixtureSpec& spec, std::uint64_t seed, double noise_scale = 1.0);

/// Splits n proportionally to `weights`; the remainder goes to the first classes.
std::vector<Index> split_sizes(Index n, std::span<const double> weights);

}  // namespace heterospectra
