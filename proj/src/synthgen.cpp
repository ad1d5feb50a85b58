#include "heterospectra/synthgen.hpp"

#include "heterospectra/error.hpp"
#include "heterospectra/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace heterospectra {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_nonnegative(double v, const std::string& what) {
  if (!(v >= 0) || !std::isfinite(v)) throw ParameterError(what + " must be finite and >= 0");
}

Vec two_level(Index d, double low, double high) {
  Vec v(d);
  const Index half = d / 2;
  v.head(half).setConstant(low);
  v.tail(d - half).setConstant(high);
  return v;
}

std::vector<Vec> mixture_means(Index d, double mu3_high) {
  return {two_level(d, 10.0, 12.0), two_level(d, 10.0, 10.0), two_level(d, 5.0, mu3_high)};
}

}  // namespace

Index MixtureSpec::n() const { return std::accumulate(sizes.begin(), sizes.end(), Index{0}); }

void MixtureSpec::validate() const {
  if (d < 1) throw ParameterError("MixtureSpec: d must be >= 1");
  if (sizes.empty()) throw ParameterError("MixtureSpec: need at least one class");
  if (means.size() != sizes.size() || covs.size() != sizes.size()) {
    throw ParameterError("MixtureSpec: sizes, means and covs must have one entry per class");
  }
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    const std::string where = "MixtureSpec class " + std::to_string(k);
    if (sizes[k] < 1) throw ParameterError(where + ": size must be >= 1");
    if (means[k].size() != d) throw ParameterError(where + ": mean must have length d");
    if (!means[k].allFinite()) throw ParameterError(where + ": mean has non-finite entries");
    std::visit(Overloaded{
                   [&](const cov::Spherical& c) { require_nonnegative(c.variance, where + " variance"); },
                   [&](const cov::LowRankPlusIdentity& c) {
                     require_nonnegative(c.scale, where + " scale");
                     require_nonnegative(c.ridge, where + " ridge");
                     if (c.stiefel_dim < 1 || c.stiefel_dim > d) {
                       throw ParameterError(where + ": stiefel_dim must lie in [1, d]");
                     }
                   },
                   [&](const cov::Explicit& c) {
                     if (c.sigma.rows() != d || c.sigma.cols() != d) {
                       throw ParameterError(where + ": explicit covariance must be d x d");
                     }
                   },
                   [&](const cov::ProjectorPlusIdentity& c) {
                     require_nonnegative(c.scale, where + " scale");
                     require_nonnegative(c.ridge, where + " ridge");
                   },
                   [&](const cov::UniformFactorPlusIdentity& c) {
                     require_nonnegative(c.upper, where + " upper");
                     require_nonnegative(c.ridge, where + " ridge");
                   },
                   [&](const cov::SignalAngle& c) {
                     require_nonnegative(c.scale, where + " scale");
                     require_nonnegative(c.ridge, where + " ridge");
                     if (!(c.theta >= 0 && c.theta <= 1)) {
                       throw ParameterError(where + ": theta must lie in [0, 1]");
                     }
                   },
               },
               covs[k]);
  }
}

Index SignalModel::classes() const {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

SignalModel SignalModel::scaled(double c) const {
  if (!(c > 0)) throw ParameterError("SignalModel::scaled: factor must be positive");
  return SignalModel{m * c, u, lambdas * c, v, labels};
}

std::vector<Index> split_sizes(Index n, std::span<const double> weights) {
  if (weights.empty()) throw ParameterError("split_sizes: no weights");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<Index> sizes;
  Index assigned = 0;
  for (double w : weights) {
    sizes.push_back(static_cast<Index>(std::floor(static_cast<double>(n) * w / total)));
    assigned += sizes.back();
  }
  for (std::size_t k = 0; assigned < n; k = (k + 1) % sizes.size(), ++assigned) ++sizes[k];
  return sizes;
}

Mat sample_stiefel(Index d, Index m, std::uint64_t seed) {
  if (m < 1 || m > d) {
    throw ParameterError("sample_stiefel: need 1 <= m <= d, got m = " + std::to_string(m) +
                         ", d = " + std::to_string(d));
  }
  Rng rng(seed);
  return Frame::orthonormalize(rng.normal_matrix(d, m)).cols();
}

SignalModel build_signal(const MixtureSpec& spec) {
  spec.validate();
  const Index k = spec.classes();
  const Index d = spec.d;

  // M = B Mu with B the n x K membership matrix. B D^{-1} (D = diag sqrt(n_k))
  // has orthonormal columns, so the nonzero spectrum of M M^T is that of X X^T
  // with X = D Mu.
  Mat x(k, d);
  for (Index c = 0; c < k; ++c) {
    x.row(c) = std::sqrt(static_cast<double>(spec.sizes[static_cast<std::size_t>(c)])) *
               spec.means[static_cast<std::size_t>(c)].transpose();
  }
  const SymEig eig = sym_eig(x * x.transpose(), EigOptions{.method = EigMethod::jacobi});

  Vec sv(k);
  for (Index j = 0; j < k; ++j) sv[j] = (x.transpose() * eig.vectors.col(j)).norm();
  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return sv[a] > sv[b]; });
  const double top = sv[order.front()];
  if (!(top > 0) || !std::isfinite(top)) {
    throw DegenerateError("build_signal: signal matrix is numerically zero");
  }
  Index r = 0;
  while (r < k && sv[order[static_cast<std::size_t>(r)]] > 1e-8 * top) ++r;

  const Index n = spec.n();
  std::vector<Index> labels;
  labels.reserve(static_cast<std::size_t>(n));
  for (Index c = 0; c < k; ++c) labels.insert(labels.end(), static_cast<std::size_t>(spec.sizes[static_cast<std::size_t>(c)]), c);

  Mat m(n, d);
  Mat u(n, r);
  Mat v(d, r);
  Vec lambdas(r);
  for (Index j = 0; j < r; ++j) {
    const Index src = order[static_cast<std::size_t>(j)];
    lambdas[j] = sv[src];
    v.col(j) = x.transpose() * eig.vectors.col(src) / sv[src];
  }
  for (Index i = 0; i < n; ++i) {
    const Index c = labels[static_cast<std::size_t>(i)];
    m.row(i) = spec.means[static_cast<std::size_t>(c)].transpose();
    const double inv = 1.0 / std::sqrt(static_cast<double>(spec.sizes[static_cast<std::size_t>(c)]));
    for (Index j = 0; j < r; ++j) u(i, j) = eig.vectors(c, order[static_cast<std::size_t>(j)]) * inv;
  }
  // Sign convention on U, mirrored on V so that M = U Lambda V^T still holds.
  Mat signed_u = u;
  normalize_signs(signed_u);
  for (Index j = 0; j < r; ++j) {
    if (signed_u.col(j).dot(u.col(j)) < 0) v.col(j) = -v.col(j);
  }
  return SignalModel{std::move(m), Frame(std::move(signed_u)), std::move(lambdas), Frame(std::move(v)),
                     std::move(labels)};
}

Vec build_v2_theta(const SignalModel& signal, double theta, std::uint64_t seed) {
  if (!(theta >= 0 && theta <= 1)) throw ParameterError("build_v2_theta: theta must lie in [0, 1]");
  if (signal.rank() < 2) throw ParameterError("build_v2_theta: signal rank must be >= 2");
  const Index d = signal.v.n();
  if (d < 3) throw ParameterError("build_v2_theta: need d >= 3");
  const auto v1 = signal.v.cols().col(0);
  const auto v2 = signal.v.cols().col(1);
  Rng rng(seed);
  Vec q(d);
  for (Index i = 0; i < d; ++i) q[i] = rng.normal();
  for (int pass = 0; pass < 2; ++pass) {
    q -= v1.dot(q) * v1;
    q -= v2.dot(q) * v2;
  }
  q.normalize();
  return theta * v2 + std::sqrt(1.0 - theta * theta) * q;
}

RealizedCov realize_cov(const CovSpec& spec, const SignalModel& signal, Index k,
                        std::uint64_t seed) {
  const Index d = signal.v.n();
  const Mat eye = Mat::Identity(d, d);
  auto general = [](Mat sigma) {
    Mat root = psd_sqrt(sigma);
    return RealizedCov{std::move(sigma), std::move(root), std::nullopt};
  };
  const std::string where = "realize_cov class " + std::to_string(k);
  return std::visit(
      Overloaded{
          [&](const cov::Spherical& c) {
            require_nonnegative(c.variance, where + " variance");
            const double sd = std::sqrt(c.variance);
            return RealizedCov{c.variance * eye, sd * eye, sd};
          },
          [&](const cov::LowRankPlusIdentity& c) {
            const Mat f = sample_stiefel(d, c.stiefel_dim, substream(seed, StreamTag::stiefel));
            return general(c.scale * f * f.transpose() + c.ridge * eye);
          },
          [&](const cov::Explicit& c) {
            if (c.sigma.rows() != d || c.sigma.cols() != d) {
              throw ShapeError(where + ": explicit covariance must be d x d");
            }
            require_symmetric(c.sigma);
            return general(0.5 * (c.sigma + c.sigma.transpose()));
          },
          [&](const cov::ProjectorPlusIdentity& c) {
            const Mat& v = signal.v.cols();
            return general(c.scale * v * v.transpose() + c.ridge * eye);
          },
          [&](const cov::UniformFactorPlusIdentity& c) {
            Rng rng(substream(seed, StreamTag::factor));
            Mat f(d, d);
            for (Index i = 0; i < d; ++i)
              for (Index j = 0; j < d; ++j) f(i, j) = c.upper * rng.uniform();
            Mat sigma = Mat::Zero(d, d);
            sigma.selfadjointView<Eigen::Lower>().rankUpdate(f);
            sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
            return general(sigma + c.ridge * eye);
          },
          [&](const cov::SignalAngle& c) {
            const Vec w = build_v2_theta(signal, c.theta, substream(seed, StreamTag::direction));
            const auto v1 = signal.v.cols().col(0);
            return general(c.scale * (v1 * v1.transpose() + w * w.transpose()) + c.ridge * eye);
          },
      },
      spec);
}

std::vector<RealizedCov> realize_covs(const MixtureSpec& spec, const SignalModel& signal,
                                      std::uint64_t seed) {
  std::vector<RealizedCov> out;
  out.reserve(spec.covs.size());
  for (std::size_t k = 0; k < spec.covs.size(); ++k) {
    out.push_back(realize_cov(spec.covs[k], signal, static_cast<Index>(k),
                              substream(seed, StreamTag::design, k)));
  }
  return out;
}

Mat sample_noise(const SignalModel& signal, std::span<const RealizedCov> covs,
                 NoiseDriver driver, std::uint64_t seed) {
  const Index n = signal.m.rows();
  const Index d = signal.m.cols();
  if (static_cast<Index>(covs.size()) != signal.classes()) {
    throw ShapeError("sample_noise: need one covariance per class");
  }
  Mat e(n, d);
  for (Index k = 0; k < static_cast<Index>(covs.size()); ++k) {
    const RealizedCov& c = covs[static_cast<std::size_t>(k)];
    if (c.root.rows() != d || c.root.cols() != d) {
      throw ShapeError("sample_noise: covariance root must be d x d");
    }
    std::vector<Index> rows;
    for (Index i = 0; i < n; ++i)
      if (signal.labels[static_cast<std::size_t>(i)] == k) rows.push_back(i);
    Mat y(d, static_cast<Index>(rows.size()));
    for (std::size_t c_idx = 0; c_idx < rows.size(); ++c_idx) {
      Rng rng(substream(seed, StreamTag::row, static_cast<std::uint64_t>(rows[c_idx])));
      for (Index a = 0; a < d; ++a) {
        y(a, static_cast<Index>(c_idx)) =
            driver == NoiseDriver::gaussian ? rng.normal() : rng.rademacher();
      }
    }
    const Mat block = c.spherical_sd ? Mat(*c.spherical_sd * y) : Mat(c.root * y);
    for (std::size_t c_idx = 0; c_idx < rows.size(); ++c_idx) {
      e.row(rows[c_idx]) = block.col(static_cast<Index>(c_idx)).transpose();
    }
  }
  return e;
}

MixtureSpec preset(std::string_view name, const PresetOptions& opts) {
  MixtureSpec spec;
  const double figure1_weights[] = {1.0, 2.0, 2.0};
  const double balanced[] = {1.0, 1.0, 1.0};
  if (name == "figure1" || name == "elliptical" || name == "spherical_reference" ||
      name == "angle") {
    spec.d = opts.d.value_or(1000);
    spec.sizes = split_sizes(opts.n.value_or(1000), figure1_weights);
    spec.means = mixture_means(spec.d, name == "angle" ? 6.0 : 5.5);
    if (name == "figure1") {
      spec.covs = {cov::LowRankPlusIdentity{15.0 * 15.0, 100, 1.0},
                   cov::LowRankPlusIdentity{10.0 * 10.0, 50, 1.0},
                   cov::LowRankPlusIdentity{7.5 * 7.5, 200, 1.0}};
      spec.description =
          "figure1: rank-2 three-class mixture, Sigma_k = s_k^2 F_k F_k^T + I with s = (15, 10, 7.5) "
          "and Stiefel dims (100, 50, 200)";
    } else if (name == "elliptical" || name == "spherical_reference") {
      spec.covs = {cov::UniformFactorPlusIdentity{0.003, 0.1},
                   cov::UniformFactorPlusIdentity{0.001, 1.0}, cov::Spherical{2.0}};
      spec.description =
          "elliptical: Sigma_1 = F1 F1^T + .1 I, Sigma_2 = F2 F2^T + I (F square, uniform "
          "[0,.003] / [0,.001]), Sigma_3 = 2 I";
      if (name == "spherical_reference") {
        spec.covs[0] = cov::ProjectorPlusIdentity{1.0, 1.0};
        spec.description = "spherical_reference: elliptical preset with Sigma_1 = V V^T + I";
      }
    } else {
      if (!(opts.theta >= 0 && opts.theta <= 1)) {
        throw ParameterError("preset angle: theta must lie in [0, 1]");
      }
      spec.covs = {cov::LowRankPlusIdentity{15.0, 100, 0.1},
                   cov::SignalAngle{5.0, opts.theta, 0.1},
                   cov::LowRankPlusIdentity{10.0, 200, 0.1}};
      spec.description = "angle(theta=" + std::to_string(opts.theta) +
                         "): Sigma_2 = 5 V1 V1^T + 5 w w^T + .1 I with <w, V2> = theta, "
                         "mu_3 = (5, ..., 6)";
    }
  } else if (name == "figure2") {
    const Index n = opts.n.value_or(1800);
    spec.d = opts.d.value_or(n);
    spec.sizes = split_sizes(n, balanced);
    spec.means = mixture_means(spec.d, 5.5);
    spec.covs = {cov::Spherical{0.1}, cov::Spherical{0.2}, cov::Spherical{0.3}};
    spec.description =
        "figure2: balanced spherical classes .1 I, .2 I, .3 I with n = d (1800 by default)";
  } else {
    throw ParameterError("unknown preset '" + std::string(name) + "'");
  }
  spec.validate();
  return spec;
}

Dataset generate(const MixtureSpec& spec, std::uint64_t seed, double noise_scale) {
  if (!(noise_scale >= 0)) throw ParameterError("generate: noise_scale must be >= 0");
  SignalModel signal = build_signal(spec);
  const auto covs = realize_covs(spec, signal, substream(seed, StreamTag::design));
  Mat e = noise_scale * sample_noise(signal, covs, spec.noise_driver,
                                     substream(seed, StreamTag::replicate, 0));
  Mat mhat = signal.m + e;
  return Dataset{std::move(signal), std::move(e), std::move(mhat), seed};
}

}  // namespace heterospectra
