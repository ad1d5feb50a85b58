#include "heterospectra/error.hpp"
#include "heterospectra/inference.hpp"
#include "heterospectra/random.hpp"

#include "../support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace heterospectra;
using testsupport::gaussian;
using testsupport::random_orthonormal;

namespace {

Mat random_psd(Index d, std::uint64_t seed) {
  const Mat g = gaussian(d, d, seed);
  return g * g.transpose() / static_cast<double>(d) + 0.1 * Mat::Identity(d, d);
}

// Normal CDF through erfc, independent of the library.
double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// P(chi2_4 <= q) = 1 - exp(-q/2)(1 + q/2).
double chi2_4_cdf(double q) { return 1.0 - std::exp(-q / 2.0) * (1.0 + q / 2.0); }

Mat sample_gaussian_rows(const Mat& cov, const Vec& mean, Index count, std::uint64_t seed) {
  Eigen::LLT<Mat> llt(cov);
  const Mat z = gaussian(count, cov.rows(), seed);
  return (z * llt.matrixL().transpose()).rowwise() + mean.transpose();
}

Mat sample_cov(const Mat& rows) {
  const Mat c = rows.rowwise() - rows.colwise().mean();
  return c.transpose() * c / static_cast<double>(rows.rows());
}

}  // namespace

TEST_CASE("snr") {
  Vec l(2);
  l << 6, 3;
  CHECK(snr(l, 0.5, 2, 8) == doctest::Approx(1.5));
  CHECK(snr(2.0 * l, 0.5, 2, 8) == doctest::Approx(3.0));
  CHECK_THROWS_AS(snr(l, 0.0, 2, 8), ParameterError);
  CHECK_THROWS_AS(snr(l, 1.0, 3, 8), ParameterError);
}

TEST_CASE("entry_sd against closed forms and a root-based oracle") {
  const Index d = 10;
  const Frame v(random_orthonormal(d, 2, 3));
  Vec l(2);
  l << 4, 2;
  // Spherical: sigma_i / lambda_j.
  CHECK(entry_sd(0.09 * Mat::Identity(d, d), v, l, 0) == doctest::Approx(0.3 / 4));
  CHECK(entry_sd(0.09 * Mat::Identity(d, d), v, l, 1) == doctest::Approx(0.3 / 2));
  // A projector onto span(V) leaves the columns unit.
  const Mat proj = v.cols() * v.cols().transpose();
  CHECK(entry_sd(proj, v, l, 1) == doctest::Approx(0.5));

  const Mat sigma = random_psd(d, 4);
  Eigen::SelfAdjointEigenSolver<Mat> es(sigma);
  const Mat root = es.operatorSqrt();
  for (Index j = 0; j < 2; ++j) {
    const double oracle = (root * v.cols().col(j)).norm() / l[j];
    CHECK(std::abs(entry_sd(sigma, v, l, j) - oracle) < 1e-10);
  }
  CHECK_THROWS_AS(entry_sd(sigma, v, l, 2), ParameterError);
  Vec zero = l;
  zero[1] = 0;
  CHECK_THROWS_AS(entry_sd(sigma, v, zero, 1), ParameterError);
}

TEST_CASE("limiting_cov") {
  const Index d = 8;
  const Frame v(random_orthonormal(d, 3, 5));
  Vec l(3);
  l << 5, 3, 1.5;
  const Mat sigma = random_psd(d, 6);
  const Mat s = limiting_cov(sigma, v, l);
  for (Index a = 0; a < 3; ++a) {
    CHECK(std::abs(s(a, a) - std::pow(entry_sd(sigma, v, l, a), 2)) < 1e-12);
    for (Index b = 0; b < 3; ++b) {
      double naive = 0.0;
      for (Index p = 0; p < d; ++p)
        for (Index q = 0; q < d; ++q) naive += v.cols()(p, a) * sigma(p, q) * v.cols()(q, b);
      CHECK(std::abs(s(a, b) - naive / (l[a] * l[b])) < 1e-12);
    }
  }
  CHECK(s == s.transpose());
  const Mat sph = limiting_cov(2.0 * Mat::Identity(d, d), v, l);
  const Mat expect = 2.0 * l.cwiseInverse().cwiseAbs2().asDiagonal().toDenseMatrix();
  CHECK((sph - expect).cwiseAbs().maxCoeff() < 1e-12);
  Vec zero = l;
  zero[2] = 0;
  CHECK_THROWS_AS(limiting_cov(sigma, v, zero), ParameterError);
}

TEST_CASE("elliptical first-class covariance after Lambda scaling") {
  const MixtureSpec spec = preset("elliptical");
  const SignalModel s = build_signal(spec);
  const Mat expect{{2.35, 0.083}, {0.083, 0.104}};
  // Flipping the sign of V_2 flips the off-diagonal; our sign convention
  // (largest |U_ij| positive) lands on the negative branch, so compare magnitudes.
  for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    CAPTURE(seed);
    const RealizedCov rc = realize_cov(spec.covs[0], s, 0, seed);
    const Mat scaled = s.lambdas.asDiagonal() * limiting_cov(rc.sigma, s.v, s.lambdas) * s.lambdas.asDiagonal();
    for (Index a = 0; a < 2; ++a)
      for (Index b = 0; b < 2; ++b) CHECK(std::abs(std::abs(scaled(a, b)) - expect(a, b)) <= 0.1 * expect(a, b));
  }
}

TEST_CASE("entrywise_law replicates class rows") {
  const MixtureSpec spec = preset("figure2", PresetOptions{.n = 30, .d = 12});
  const SignalModel s = build_signal(spec);
  std::vector<Mat> sig;
  for (const double v : {0.1, 0.2, 0.3}) sig.push_back(v * Mat::Identity(12, 12));
  const EntrywiseLaw law = entrywise_law(s, sig);
  CHECK(law.sigma.rows() == 30);
  CHECK(law.per_class_s.size() == 3);
  for (Index i = 0; i < 30; ++i) {
    const Index c = s.labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < s.rank(); ++j) {
      // Spherical reduction: sigma_ij lambda_j = sigma_i.
      CHECK(law.sigma(i, j) * s.lambdas[j] == doctest::Approx(std::sqrt(0.1 * static_cast<double>(c + 1))));
    }
  }
  CHECK_THROWS_AS(entrywise_law(s, std::span<const Mat>(sig).first(2)), ShapeError);
}

TEST_CASE("class_cov_estimate on small cases") {
  Mat u(4, 2);
  u << 1, 1, 1, 1, 0, 2, 2, 0;
  const std::vector<Index> labels{0, 0, 1, 1};
  const ClassCovEstimate est = class_cov_estimate(u, labels);
  CHECK(est.counts == std::vector<Index>{2, 2});
  CHECK(est.s_hat[0] == Mat::Zero(2, 2));
  CHECK(est.centroids[1].isApprox(Vec::Ones(2)));
  // Two points symmetric about the centroid: the outer product of the half-difference.
  const Vec half = (Vec(2) << -1, 1).finished();
  CHECK((est.s_hat[1] - half * half.transpose()).cwiseAbs().maxCoeff() < 1e-15);

  const std::vector<Index> gap{0, 0, 2, 2};
  CHECK_THROWS_AS(class_cov_estimate(u, gap), ParameterError);
  const std::vector<Index> short_labels{0, 1};
  CHECK_THROWS_AS(class_cov_estimate(u, short_labels), ShapeError);
}

TEST_CASE("nearest_centroid_labels recovers separated clusters") {
  const Mat a = sample_gaussian_rows(0.01 * Mat::Identity(2, 2), Vec::Zero(2), 20, 1);
  const Mat b = sample_gaussian_rows(0.01 * Mat::Identity(2, 2), Vec::Constant(2, 3.0), 20, 2);
  const Mat c = sample_gaussian_rows(0.01 * Mat::Identity(2, 2), (Vec(2) << 3, -3).finished(), 20, 3);
  Mat all(60, 2);
  all << a, b, c;
  const std::vector<Index> labels = nearest_centroid_labels(all, 3);
  for (Index block = 0; block < 3; ++block)
    for (Index i = 0; i < 20; ++i) CHECK(labels[static_cast<std::size_t>(block * 20 + i)] == labels[static_cast<std::size_t>(block * 20)]);
  CHECK(labels[0] == 0);
  CHECK(labels[0] != labels[20]);
  CHECK(labels[20] != labels[40]);
  CHECK(labels[0] != labels[40]);
  CHECK_THROWS_AS(nearest_centroid_labels(all, 0), ParameterError);
}

TEST_CASE("pivots whiten exact Gaussian rows") {
  const Mat cov{{2.0, 0.6}, {0.6, 0.5}};
  const Vec mean = (Vec(2) << 1.0, -2.0).finished();
  const Mat rows = sample_gaussian_rows(cov, mean, 5000, 42);
  const std::vector<Index> labels(5000, 0);
  const ClassCovEstimate est{{mean}, {cov}, {5000}};
  const Mat t = pivots(rows, est, labels);
  CHECK((sample_cov(t) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.1);

  // With the plug-in estimate the pivots are exactly white.
  const ClassCovEstimate plug = class_cov_estimate(rows, labels);
  const Mat tp = pivots(rows, plug, labels);
  CHECK((sample_cov(tp) - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);

  // A row at its centroid maps to zero.
  Mat at = rows.topRows(1);
  at.row(0) = mean.transpose();
  CHECK(pivots(at, est, std::vector<Index>{0}).norm() < 1e-15);

  // Rotating rows, centroids and covariance together leaves pivot norms unchanged.
  const double th = 0.7;
  const Mat rot{{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}};
  const ClassCovEstimate turned{{rot * mean}, {rot * cov * rot.transpose()}, {5000}};
  const Mat tr = pivots(rows * rot.transpose(), turned, labels);
  CHECK((tr.rowwise().norm() - t.rowwise().norm()).cwiseAbs().maxCoeff() < 1e-10);

  const ClassCovEstimate singular{{mean}, {Mat{{1.0, 1.0}, {1.0, 1.0}}}, {5000}};
  CHECK_THROWS_AS(pivots(rows, singular, labels), DegenerateError);
}

TEST_CASE("chi2_quantile") {
  CHECK(chi2_quantile(2, 0.95) == doctest::Approx(-2.0 * std::log(0.05)).epsilon(1e-14));
  CHECK(std::abs(chi2_quantile(2, 0.95) - 5.991464547) < 1e-8);
  // df = 1: the square of a standard normal quantile.
  const double q1 = chi2_quantile(1, 0.6826895);
  CHECK(std::abs(q1 - 1.0) < 1e-3);
  CHECK(std::abs(2.0 * phi(std::sqrt(q1)) - 1.0 - 0.6826895) < 1e-9);
  const double q4 = chi2_quantile(4, 0.95);
  CHECK(std::abs(q4 - 9.4877) < 1e-3);
  CHECK(std::abs(chi2_4_cdf(q4) - 0.95) < 1e-10);
  CHECK_THROWS_AS(chi2_quantile(0, 0.5), ParameterError);
  CHECK_THROWS_AS(chi2_quantile(2, 1.0), ParameterError);
  CHECK_THROWS_AS(chi2_quantile(2, 0.0), ParameterError);
}

TEST_CASE("ellipse geometry") {
  const Ellipse circle = ellipse(Mat::Identity(2, 2), 0.95, 400);
  const double radius = std::sqrt(-2.0 * std::log(0.05));
  CHECK((circle.polyline.rowwise().norm().array() - radius).abs().maxCoeff() < 1e-12);
  CHECK(circle.axes[0] == doctest::Approx(radius));
  // Inscribed regular polygon area.
  CHECK(polygon_area(circle.polyline) ==
        doctest::Approx(0.5 * 400 * radius * radius * std::sin(2 * std::numbers::pi / 400)));

  const Ellipse e = ellipse(Mat{{4.0, 0.0}, {0.0, 1.0}}, 0.95, 64, (Vec(2) << 1.0, 2.0).finished());
  CHECK(e.axes[0] / e.axes[1] == doctest::Approx(2.0));
  CHECK(std::abs(std::sin(e.angle)) < 1e-12);
  CHECK(e.center.isApprox((Vec(2) << 1.0, 2.0).finished()));
  CHECK(polygon_area(e.polyline) > 0);  // counterclockwise

  CHECK_THROWS_AS(ellipse(Mat{{1.0, 1.0}, {1.0, 1.0}}, 0.95, 64), DegenerateError);
  CHECK_THROWS_AS(ellipse(Mat::Identity(3, 3), 0.95, 64), ShapeError);
  CHECK_THROWS_AS(ellipse(Mat::Identity(2, 2), 0.95, 2), ParameterError);
}

TEST_CASE("ellipse coverage under the exact Gaussian") {
  const Mat cov{{1.5, -0.4}, {-0.4, 0.3}};
  const Mat draws = sample_gaussian_rows(cov, Vec::Zero(2), 100000, 7);
  const Mat inv = cov.inverse();
  const double q = chi2_quantile(2, 0.95);
  Index inside = 0;
  for (Index i = 0; i < draws.rows(); ++i) {
    const Vec x = draws.row(i).transpose();
    if (x.dot(inv * x) <= q) ++inside;
  }
  const double frac = static_cast<double>(inside) / 1e5;
  CHECK(frac >= 0.945);
  CHECK(frac <= 0.955);
}

TEST_CASE("ellipse_mismatch") {
  const Ellipse a = ellipse(Mat::Identity(2, 2), 0.95, 512);
  CHECK(ellipse_mismatch(a, a) < 1e-12);
  // Concentric circles of radius 1 and 2 (scaled covariance): mismatch 1 - 1/4.
  const Ellipse b = ellipse(4.0 * Mat::Identity(2, 2), 0.95, 512);
  CHECK(ellipse_mismatch(a, b) == doctest::Approx(0.75).epsilon(1e-3));
  // Far apart: disjoint.
  const Ellipse c = ellipse(Mat::Identity(2, 2), 0.95, 512, Vec::Constant(2, 100.0));
  CHECK(ellipse_mismatch(a, c) == doctest::Approx(1.0));
}

TEST_CASE("diagnostics on closed-form inputs") {
  // Rank-one flat signal: one class, constant mean.
  MixtureSpec spec;
  spec.d = 16;
  spec.sizes = {16};
  spec.means = {Vec::Constant(16, 2.0)};
  spec.covs = {cov::Spherical{1.0}};
  const SignalModel s = build_signal(spec);
  const auto covs = realize_covs(spec, s, 1);
  const Diagnostics dg = diagnostics(s, covs);
  CHECK(dg.kappa == doctest::Approx(1.0));
  CHECK(dg.mu0 == doctest::Approx(1.0));
  CHECK(dg.kappa_sigma == doctest::Approx(1.0));
  CHECK(dg.sigma == doctest::Approx(1.0));
  CHECK(dg.snr == doctest::Approx(s.lambdas[0] / 4.0));
  CHECK(dg.r == 1);
}

TEST_CASE("diagnostics: equal spherical covariances and scale invariance") {
  MixtureSpec spec = preset("figure2", PresetOptions{.n = 60, .d = 60});
  spec.covs = {cov::Spherical{0.2}, cov::Spherical{0.2}, cov::Spherical{0.2}};
  const SignalModel s = build_signal(spec);
  const auto covs = realize_covs(spec, s, 1);
  const Diagnostics dg = diagnostics(s, covs);
  CHECK(dg.kappa_sigma == doctest::Approx(1.0));
  CHECK(dg.kappa_sigma_upper == doctest::Approx(1.0));
  CHECK(dg.kappa_sigma_lower == doctest::Approx(1.0));

  const double c = 3.0;
  const SignalModel sc = s.scaled(c);
  std::vector<RealizedCov> scaled_covs;
  for (const auto& rc : covs) scaled_covs.push_back(RealizedCov{c * c * rc.sigma, c * rc.root, std::nullopt});
  const Diagnostics ds = diagnostics(sc, scaled_covs);
  CHECK(std::abs(ds.kappa - dg.kappa) < 1e-10);
  CHECK(std::abs(ds.mu0 - dg.mu0) < 1e-10);
  CHECK(std::abs(ds.snr - dg.snr) < 1e-10 * dg.snr);
  CHECK(std::abs(ds.kappa_sigma - dg.kappa_sigma) < 1e-10);

  // Scaling M alone multiplies the SNR.
  const Diagnostics dm = diagnostics(sc, covs);
  CHECK(dm.snr == doctest::Approx(c * dg.snr));
}

TEST_CASE("diagnostics margins") {
  const MixtureSpec wide = preset("figure2", PresetOptions{.n = 60, .d = 120});
  const SignalModel s = build_signal(wide);
  const Diagnostics dg = diagnostics(s, realize_covs(wide, s, 1));
  auto find = [&](const Diagnostics& d, const std::string& name) {
    for (const Margin& m : d.margins)
      if (m.name == name) return m;
    FAIL("missing margin " << name);
    return Margin{};
  };
  CHECK(find(dg, "d_over_n").value == doctest::Approx(2.0));
  CHECK(find(dg, "d_over_n").pass == true);
  CHECK_FALSE(find(dg, "be_snr_term").pass.has_value());
  for (const Margin& m : dg.margins) CHECK(std::isfinite(m.value));

  // d < n violates the high-dimensional regime.
  const MixtureSpec tall = preset("figure2", PresetOptions{.n = 120, .d = 60});
  const SignalModel t = build_signal(tall);
  CHECK(find(diagnostics(t, realize_covs(tall, t, 1)), "d_over_n").pass == false);
}

TEST_CASE("diagnostics on the default mixture presets") {
  // Independent evaluation of SNR / (kappa sqrt(log(n v d))) from an SVD of M.
  auto oracle = [](const SignalModel& s, double sigma) {
    Eigen::JacobiSVD<Mat> svd(s.m);
    const Vec sv = svd.singularValues();
    const double n = static_cast<double>(s.m.rows());
    const double d = static_cast<double>(s.m.cols());
    const double snr_val = sv[1] / (sigma * std::sqrt(2.0 * d));
    return snr_val / ((sv[0] / sv[1]) * std::sqrt(std::log(std::max(n, d))));
  };

  const MixtureSpec f1 = preset("figure1");
  const SignalModel s1 = build_signal(f1);
  const Diagnostics d1 = diagnostics(s1, realize_covs(f1, s1, 1));
  for (const Margin& m : d1.margins) {
    CAPTURE(m.name);
    CHECK(std::isfinite(m.value));
  }
  CHECK(d1.margins.front().name == "snr_over_kappa_sqrt_log");
  // sigma^2 = ||225 F F^T + I|| = 226 exactly.
  CHECK(d1.sigma == doctest::Approx(std::sqrt(226.0)).epsilon(1e-10));
  CHECK(d1.margins.front().value == doctest::Approx(oracle(s1, std::sqrt(226.0))).epsilon(1e-8));

  const MixtureSpec f2 = preset("figure2");
  const SignalModel s2 = build_signal(f2);
  const Diagnostics d2 = diagnostics(s2, realize_covs(f2, s2, 1));
  CHECK(d2.sigma == doctest::Approx(std::sqrt(0.3)).epsilon(1e-12));
  CHECK(d2.margins.front().value == doctest::Approx(oracle(s2, std::sqrt(0.3))).epsilon(1e-8));
}
