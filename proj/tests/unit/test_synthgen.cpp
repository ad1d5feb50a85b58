#include "heterospectra/error.hpp"
#include "heterospectra/random.hpp"
#include "heterospectra/synthgen.hpp"

#include "../support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

using namespace heterospectra;

namespace {

Mat empirical_cov(const Mat& rows) {
  const Vec mean = rows.colwise().mean();
  const Mat c = rows.rowwise() - mean.transpose();
  return c.transpose() * c / static_cast<double>(rows.rows() - 1);
}

MixtureSpec one_class(Index n, Index d, CovSpec cov) {
  MixtureSpec spec;
  spec.d = d;
  spec.sizes = {n};
  spec.means = {Vec::LinSpaced(d, 1.0, 2.0)};
  spec.covs = {std::move(cov)};
  return spec;
}

}  // namespace

TEST_CASE("split_sizes") {
  const double w122[] = {1, 2, 2};
  CHECK(split_sizes(1000, w122) == std::vector<Index>{200, 400, 400});
  const double w111[] = {1, 1, 1};
  CHECK(split_sizes(10, w111) == std::vector<Index>{4, 3, 3});
  CHECK(split_sizes(11, w111) == std::vector<Index>{4, 4, 3});
  CHECK_THROWS_AS(split_sizes(10, std::span<const double>{}), ParameterError);
}

TEST_CASE("substreams are distinct and stable") {
  CHECK(substream(1, StreamTag::row, 0) == substream(1, StreamTag::row, 0));
  CHECK(substream(1, StreamTag::row, 0) != substream(1, StreamTag::row, 1));
  CHECK(substream(1, StreamTag::row, 0) != substream(1, StreamTag::design, 0));
  CHECK(substream(1, StreamTag::row, 0) != substream(2, StreamTag::row, 0));
}

TEST_CASE("Stiefel draws are orthonormal with isotropic second moment") {
  const Index d = 6;
  const Index m = 2;
  Mat acc = Mat::Zero(d, d);
  const int draws = 2000;
  for (int t = 0; t < draws; ++t) {
    const Mat f = sample_stiefel(d, m, 1000 + static_cast<std::uint64_t>(t));
    CHECK((f.transpose() * f - Mat::Identity(m, m)).cwiseAbs().maxCoeff() < 1e-12);
    acc += f * f.transpose();
  }
  acc /= draws;
  // E[F F^T] = (m / d) I for the Haar measure.
  CHECK((acc - (static_cast<double>(m) / d) * Mat::Identity(d, d)).cwiseAbs().maxCoeff() < 0.03);
  CHECK_THROWS_AS(sample_stiefel(3, 4, 1), ParameterError);
  CHECK_THROWS_AS(sample_stiefel(3, 0, 1), ParameterError);
}

TEST_CASE("figure1 signal is rank two with class-constant U rows") {
  const MixtureSpec spec = preset("figure1", PresetOptions{.n = 50, .d = 250});
  CHECK(spec.sizes == std::vector<Index>{10, 20, 20});
  const SignalModel s = build_signal(spec);
  CHECK(s.rank() == 2);
  Eigen::JacobiSVD<Mat> svd(s.m);
  const Vec sv = svd.singularValues();
  CHECK(sv[2] < 1e-8 * sv[0]);
  CHECK(std::abs(sv[0] - s.lambdas[0]) < 1e-9 * sv[0]);
  CHECK(std::abs(sv[1] - s.lambdas[1]) < 1e-9 * sv[0]);
  const Mat back = s.u.cols() * s.lambdas.asDiagonal() * s.v.cols().transpose();
  CHECK((back - s.m).cwiseAbs().maxCoeff() < 1e-9);

  std::set<std::pair<double, double>> rows;
  for (Index i = 0; i < s.m.rows(); ++i) {
    const Index c = s.labels[static_cast<std::size_t>(i)];
    const Index first = c == 0 ? 0 : (c == 1 ? 10 : 30);
    CHECK((s.u.cols().row(i) - s.u.cols().row(first)).norm() < 1e-14);
    rows.emplace(s.u.cols()(first, 0), s.u.cols()(first, 1));
  }
  CHECK(rows.size() == 3);
  CHECK(s.classes() == 3);
}

TEST_CASE("single class has a closed-form decomposition") {
  const Index n = 7;
  const Index d = 5;
  const MixtureSpec spec = one_class(n, d, cov::Spherical{1.0});
  const SignalModel s = build_signal(spec);
  const Vec mu = spec.means[0];
  REQUIRE(s.rank() == 1);
  CHECK(s.lambdas[0] == doctest::Approx(std::sqrt(static_cast<double>(n)) * mu.norm()).epsilon(1e-12));
  for (Index i = 0; i < n; ++i) CHECK(s.u.cols()(i, 0) == doctest::Approx(1.0 / std::sqrt(static_cast<double>(n))));
  CHECK((s.v.cols().col(0) - mu.normalized()).norm() < 1e-12);
}

TEST_CASE("scaled signal") {
  const SignalModel s = build_signal(preset("elliptical", PresetOptions{.n = 25, .d = 10}));
  const SignalModel t = s.scaled(3.0);
  CHECK((t.m - 3.0 * s.m).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((t.lambdas - 3.0 * s.lambdas).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(t.u.cols() == s.u.cols());
  CHECK_THROWS_AS(s.scaled(0.0), ParameterError);
}

TEST_CASE("realized covariance spectra") {
  const SignalModel s = build_signal(preset("elliptical", PresetOptions{.n = 25, .d = 12}));
  const RealizedCov proj = realize_cov(cov::ProjectorPlusIdentity{3.0, 0.5}, s, 0, 1);
  Eigen::SelfAdjointEigenSolver<Mat> pe(proj.sigma);
  for (Index i = 0; i < 10; ++i) CHECK(pe.eigenvalues()[i] == doctest::Approx(0.5));
  for (Index i = 10; i < 12; ++i) CHECK(pe.eigenvalues()[i] == doctest::Approx(3.5));

  const RealizedCov lr = realize_cov(cov::LowRankPlusIdentity{4.0, 3, 1.0}, s, 0, 2);
  Eigen::SelfAdjointEigenSolver<Mat> le(lr.sigma);
  for (Index i = 0; i < 9; ++i) CHECK(le.eigenvalues()[i] == doctest::Approx(1.0));
  for (Index i = 9; i < 12; ++i) CHECK(le.eigenvalues()[i] == doctest::Approx(5.0));
  CHECK((lr.root * lr.root - lr.sigma).cwiseAbs().maxCoeff() < 1e-10);

  const RealizedCov sph = realize_cov(cov::Spherical{0.25}, s, 0, 3);
  REQUIRE(sph.spherical_sd.has_value());
  CHECK(*sph.spherical_sd == doctest::Approx(0.5));

  const RealizedCov uf = realize_cov(cov::UniformFactorPlusIdentity{0.5, 0.1}, s, 0, 4);
  Eigen::SelfAdjointEigenSolver<Mat> ue(uf.sigma);
  CHECK(ue.eigenvalues()[0] >= 0.1 - 1e-12);
  CHECK((uf.sigma - uf.sigma.transpose()).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(realize_cov(cov::Explicit{Mat::Identity(3, 3)}, s, 0, 5), ShapeError);
}

TEST_CASE("build_v2_theta") {
  const SignalModel s = build_signal(preset("elliptical", PresetOptions{.n = 25, .d = 15}));
  const auto v1 = s.v.cols().col(0);
  const auto v2 = s.v.cols().col(1);
  for (const double theta : {0.0, 0.3, 0.8, 1.0}) {
    CAPTURE(theta);
    const Vec w = build_v2_theta(s, theta, 9);
    CHECK(w.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(w.dot(v1)) < 1e-12);
    CHECK(w.dot(v2) == doctest::Approx(theta).epsilon(1e-12));
  }
  CHECK_THROWS_AS(build_v2_theta(s, 1.5, 9), ParameterError);
  CHECK_THROWS_AS(build_v2_theta(build_signal(one_class(4, 5, cov::Spherical{1.0})), 0.5, 9), ParameterError);
}

TEST_CASE("noise draws match their covariance") {
  const Index n = 5000;
  const Index d = 20;
  const Mat g = testsupport::gaussian(d, d, 77);
  Mat sigma = g * g.transpose() / d + 0.5 * Mat::Identity(d, d);
  const MixtureSpec spec = one_class(n, d, cov::Explicit{sigma});
  const Dataset ds = generate(spec, 2024);
  const Mat cov_hat = empirical_cov(ds.e);
  // Entrywise standard error of a Gaussian sample covariance.
  double worst = 0.0;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) {
      const double se = std::sqrt((sigma(i, j) * sigma(i, j) + sigma(i, i) * sigma(j, j)) / n);
      worst = std::max(worst, std::abs(cov_hat(i, j) - sigma(i, j)) / se);
    }
  CHECK(worst < 5.0);
  CHECK((cov_hat.diagonal() - sigma.diagonal()).cwiseQuotient(sigma.diagonal()).cwiseAbs().mean() < 0.05);

  // Whitened rows are isotropic.
  const RealizedCov rc = realize_cov(spec.covs[0], ds.signal, 0, 1);
  const Mat white = (rc.root.inverse() * ds.e.transpose()).transpose();
  CHECK((empirical_cov(white) - Mat::Identity(d, d)).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("rademacher driver") {
  MixtureSpec spec = one_class(30, 8, cov::Spherical{1.0});
  spec.noise_driver = NoiseDriver::rademacher;
  const Dataset ds = generate(spec, 5);
  CHECK((ds.e.cwiseAbs().array() == 1.0).all());
  CHECK(std::abs(ds.e.mean()) < 0.2);
}

TEST_CASE("generation is reproducible and seed-sensitive") {
  const MixtureSpec spec = preset("elliptical", PresetOptions{.n = 40, .d = 16});
  const Dataset a = generate(spec, 99);
  const Dataset b = generate(spec, 99);
  const Dataset c = generate(spec, 100);
  CHECK(a.mhat == b.mhat);
  CHECK(a.e == b.e);
  CHECK(a.mhat != c.mhat);
  CHECK((a.mhat - a.signal.m - a.e).cwiseAbs().maxCoeff() < 1e-12);

  const Dataset quiet = generate(spec, 99, 0.0);
  CHECK(quiet.mhat == quiet.signal.m);
  const Dataset half = generate(spec, 99, 0.5);
  CHECK((half.e - 0.5 * a.e).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(generate(spec, 1, -1.0), ParameterError);
}

TEST_CASE("presets") {
  for (const char* name : {"figure1", "figure2", "elliptical", "spherical_reference", "angle"}) {
    CAPTURE(name);
    const MixtureSpec spec = preset(name, PresetOptions{.n = 60, .d = 250});
    CHECK(spec.n() == 60);
    CHECK(spec.d == 250);
    CHECK(spec.classes() == 3);
    CHECK_FALSE(spec.description.empty());
    CHECK(build_signal(spec).rank() >= 2);
  }
  CHECK(preset("figure2").d == 1800);
  CHECK(preset("figure2").sizes == std::vector<Index>{600, 600, 600});
  CHECK(preset("figure1").sizes == std::vector<Index>{200, 400, 400});
  CHECK(preset("figure1").d == 1000);
  CHECK(preset("figure2", PresetOptions{.n = 30}).d == 30);
  CHECK_THROWS_AS(preset("nope"), ParameterError);
  CHECK_THROWS_AS(preset("angle", PresetOptions{.theta = 1.5}), ParameterError);
}

TEST_CASE("spec validation") {
  MixtureSpec spec = one_class(5, 4, cov::Spherical{1.0});
  spec.sizes[0] = 0;
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec = one_class(5, 4, cov::Spherical{-1.0});
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec = one_class(5, 4, cov::LowRankPlusIdentity{1.0, 5, 1.0});
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec = one_class(5, 4, cov::Spherical{1.0});
  spec.means[0][1] = NAN;
  CHECK_THROWS_AS(spec.validate(), ParameterError);
  spec = one_class(5, 4, cov::Spherical{1.0});
  spec.means[0].setZero();
  CHECK_THROWS_AS(build_signal(spec), DegenerateError);
}
