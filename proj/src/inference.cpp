#include "heterospectra/inference.hpp"

#include "heterospectra/error.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace heterospectra {
namespace {

using Point = Eigen::Vector2d;

Index class_count(std::span<const Index> labels) {
  Index k = 0;
  for (Index l : labels) {
    if (l < 0) throw ParameterError("labels must be nonnegative");
    k = std::max(k, l + 1);
  }
  return k;
}

void check_law_inputs(const Mat& sigma_i, const Frame& v, const Vec& lambdas) {
  if (sigma_i.rows() != v.n() || sigma_i.cols() != v.n()) {
    throw ShapeError("covariance must be d x d with d = rows of V");
  }
  if (lambdas.size() != v.r()) throw ShapeError("need one lambda per column of V");
  for (Index j = 0; j < lambdas.size(); ++j) {
    if (!(lambdas[j] != 0.0) || !std::isfinite(lambdas[j])) {
      throw ParameterError("lambda_" + std::to_string(j + 1) + " must be nonzero and finite");
    }
  }
}

std::vector<Point> to_points(const Mat& poly) {
  std::vector<Point> pts(static_cast<std::size_t>(poly.rows()));
  for (Index i = 0; i < poly.rows(); ++i) pts[static_cast<std::size_t>(i)] = poly.row(i).transpose();
  return pts;
}

double cross(const Point& a, const Point& b, const Point& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

// Sutherland-Hodgman clipping of `subject` against the convex counterclockwise `clip`.
std::vector<Point> clip_convex(std::vector<Point> subject, const std::vector<Point>& clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Point& a = clip[e];
    const Point& b = clip[(e + 1) % clip.size()];
    std::vector<Point> out;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Point& p = subject[i];
      const Point& q = subject[(i + 1) % subject.size()];
      const double cp = cross(a, b, p);
      const double cq = cross(a, b, q);
      if (cp >= 0) out.push_back(p);
      if ((cp >= 0) != (cq >= 0)) out.push_back(p + (q - p) * (cp / (cp - cq)));
    }
    subject = std::move(out);
  }
  return subject;
}

double area_of(const std::vector<Point>& pts) {
  double twice = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point& p = pts[i];
    const Point& q = pts[(i + 1) % pts.size()];
    twice += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * twice;
}

// Index of the nearest centre (lowest index on ties).
Index nearest(const Mat& rows, Index i, const Mat& centres) {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index c = 0; c < centres.rows(); ++c) {
    const double dist = (rows.row(i) - centres.row(c)).squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = c;
    }
  }
  return best;
}

}  // namespace

double snr(const Vec& lambdas, double sigma, Index r, Index d) {
  if (!(sigma > 0)) throw ParameterError("snr: sigma must be positive");
  if (r < 1 || r > lambdas.size()) throw ParameterError("snr: rank out of range");
  if (d < 1) throw ParameterError("snr: d must be positive");
  const double lambda_r = lambdas[r - 1];
  if (!(lambda_r > 0)) throw ParameterError("snr: lambda_r must be positive");
  return lambda_r / (sigma * std::sqrt(static_cast<double>(r) * static_cast<double>(d)));
}

double entry_sd(const Mat& sigma_i, const Frame& v, const Vec& lambdas, Index j) {
  if (j < 0 || j >= v.r()) throw ParameterError("entry_sd: column index out of range");
  if (sigma_i.rows() != v.n() || sigma_i.cols() != v.n()) {
    throw ShapeError("entry_sd: covariance must be d x d");
  }
  if (lambdas.size() != v.r()) throw ShapeError("entry_sd: need one lambda per column of V");
  if (!(lambdas[j] != 0.0)) throw ParameterError("entry_sd: lambda_j is zero");
  const auto vj = v.cols().col(j);
  const double quad = vj.dot(sigma_i * vj);
  return std::sqrt(std::max(quad, 0.0)) / std::abs(lambdas[j]);
}

Mat limiting_cov(const Mat& sigma_i, const Frame& v, const Vec& lambdas) {
  check_law_inputs(sigma_i, v, lambdas);
  const Mat& vm = v.cols();
  Mat w = vm.transpose() * (sigma_i * vm);
  const Index r = v.r();
  for (Index a = 0; a < r; ++a) {
    for (Index b = 0; b < a; ++b) w(a, b) = w(b, a) = 0.5 * (w(a, b) + w(b, a));
  }
  for (Index a = 0; a < r; ++a)
    for (Index b = 0; b < r; ++b) w(a, b) /= lambdas[a] * lambdas[b];
  return w;
}

EntrywiseLaw entrywise_law(const SignalModel& signal, std::span<const Mat> class_sigmas) {
  const Index k = signal.classes();
  if (static_cast<Index>(class_sigmas.size()) != k) {
    throw ShapeError("entrywise_law: need one covariance per class");
  }
  EntrywiseLaw law;
  Mat per_class(k, signal.rank());
  for (Index c = 0; c < k; ++c) {
    const Mat& s = class_sigmas[static_cast<std::size_t>(c)];
    law.per_class_s.push_back(limiting_cov(s, signal.v, signal.lambdas));
    for (Index j = 0; j < signal.rank(); ++j) per_class(c, j) = entry_sd(s, signal.v, signal.lambdas, j);
  }
  law.sigma.resize(static_cast<Index>(signal.labels.size()), signal.rank());
  for (std::size_t i = 0; i < signal.labels.size(); ++i) {
    law.sigma.row(static_cast<Index>(i)) = per_class.row(signal.labels[i]);
  }
  return law;
}

ClassCovEstimate class_cov_estimate(const Mat& uhat, std::span<const Index> labels) {
  if (static_cast<Index>(labels.size()) != uhat.rows()) {
    throw ShapeError("class_cov_estimate: need one label per row");
  }
  const Index k = class_count(labels);
  const Index r = uhat.cols();
  ClassCovEstimate est;
  est.counts.assign(static_cast<std::size_t>(k), 0);
  est.centroids.assign(static_cast<std::size_t>(k), Vec::Zero(r));
  est.s_hat.assign(static_cast<std::size_t>(k), Mat::Zero(r, r));
  for (Index i = 0; i < uhat.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    ++est.counts[c];
    est.centroids[c] += uhat.row(i).transpose();
  }
  for (Index c = 0; c < k; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    if (est.counts[cu] == 0) {
      throw ParameterError("class_cov_estimate: class " + std::to_string(c) + " is empty");
    }
    est.centroids[cu] /= static_cast<double>(est.counts[cu]);
  }
  for (Index i = 0; i < uhat.rows(); ++i) {
    const auto c = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    const Vec dev = uhat.row(i).transpose() - est.centroids[c];
    est.s_hat[c].noalias() += dev * dev.transpose();
  }
  for (std::size_t c = 0; c < est.s_hat.size(); ++c) est.s_hat[c] /= static_cast<double>(est.counts[c]);
  return est;
}

std::vector<Index> nearest_centroid_labels(const Mat& uhat, Index classes) {
  const Index n = uhat.rows();
  if (classes < 1 || classes > n) {
    throw ParameterError("nearest_centroid_labels: need 1 <= classes <= rows");
  }
  Mat centres(classes, uhat.cols());
  centres.row(0) = uhat.row(0);
  Vec min_dist = (uhat.rowwise() - uhat.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < classes; ++c) {
    Index far = 0;
    min_dist.maxCoeff(&far);
    centres.row(c) = uhat.row(far);
    min_dist = min_dist.cwiseMin((uhat.rowwise() - uhat.row(far)).rowwise().squaredNorm());
  }
  std::vector<Index> labels(static_cast<std::size_t>(n));
  for (int pass = 0; pass < 2; ++pass) {
    for (Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = nearest(uhat, i, centres);
    if (pass == 1) break;
    Mat sums = Mat::Zero(classes, uhat.cols());
    Vec counts = Vec::Zero(classes);
    for (Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += uhat.row(i);
      counts[labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Index c = 0; c < classes; ++c) {
      if (counts[c] > 0) centres.row(c) = sums.row(c) / counts[c];
    }
  }
  return labels;
}

Mat pivots(const Mat& uhat, const ClassCovEstimate& est, std::span<const Index> labels) {
  if (static_cast<Index>(labels.size()) != uhat.rows()) throw ShapeError("pivots: need one label per row");
  const Index r = uhat.cols();
  std::vector<Mat> inv_roots;
  for (std::size_t c = 0; c < est.s_hat.size(); ++c) {
    const Mat& s = est.s_hat[c];
    if (s.rows() != r || s.cols() != r) throw ShapeError("pivots: class covariance must be r x r");
    const SymEig eig = sym_eig(s, EigOptions{.method = EigMethod::jacobi});
    const double top = eig.values.maxCoeff();
    // A spread at rounding level relative to the centroid is no spread at all.
    const double floor = 1e-24 * std::max(est.centroids[c].squaredNorm(), 1e-300);
    if (!(top > floor) || eig.values.minCoeff() <= 1e-12 * top) {
      throw DegenerateError("pivots: class " + std::to_string(c) + " covariance is singular");
    }
    const Vec scale = eig.values.cwiseSqrt().cwiseInverse();
    inv_roots.push_back(eig.vectors * scale.asDiagonal() * eig.vectors.transpose());
  }
  Mat out(uhat.rows(), r);
  for (Index i = 0; i < uhat.rows(); ++i) {
    const Index c = labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= static_cast<Index>(inv_roots.size())) {
      throw ParameterError("pivots: label " + std::to_string(c) + " has no class estimate");
    }
    const auto cu = static_cast<std::size_t>(c);
    out.row(i) = (inv_roots[cu] * (uhat.row(i).transpose() - est.centroids[cu])).transpose();
  }
  return out;
}

double chi2_quantile(int df, double level) {
  if (df < 1) throw ParameterError("chi2_quantile: df must be >= 1");
  if (!(level > 0 && level < 1)) throw ParameterError("chi2_quantile: level must lie in (0, 1)");
  if (df == 2) return -2.0 * std::log1p(-level);
  return boost::math::quantile(boost::math::chi_squared(static_cast<double>(df)), level);
}

Ellipse ellipse(const Mat& cov, double level, Index points, const Vec& center) {
  if (cov.rows() != 2 || cov.cols() != 2) throw ShapeError("ellipse: covariance must be 2 x 2");
  if (center.size() != 2) throw ShapeError("ellipse: center must have length 2");
  if (points < 3) throw ParameterError("ellipse: need at least 3 points");
  require_symmetric(cov);
  const double q = chi2_quantile(2, level);
  const SymEig eig = sym_eig(cov, EigOptions{.method = EigMethod::jacobi});
  const double top = eig.values.maxCoeff();
  if (!(top > 0) || eig.values.minCoeff() <= 1e-12 * top) {
    throw DegenerateError("ellipse: covariance is singular");
  }
  const Index major = eig.values[0] >= eig.values[1] ? 0 : 1;
  Point w1 = eig.vectors.col(major);
  Point w2 = eig.vectors.col(1 - major);
  if (w1.x() * w2.y() - w1.y() * w2.x() < 0) w2 = -w2;

  Ellipse e;
  e.axes = Vec(2);
  e.axes << std::sqrt(q * eig.values[major]), std::sqrt(q * eig.values[1 - major]);
  e.angle = std::atan2(w1.y(), w1.x());
  e.center = center;
  e.polyline.resize(points, 2);
  for (Index k = 0; k < points; ++k) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(points);
    const Point p = center + e.axes[0] * std::cos(t) * w1 + e.axes[1] * std::sin(t) * w2;
    e.polyline.row(k) = p.transpose();
  }
  return e;
}

double polygon_area(const Mat& poly) {
  if (poly.cols() != 2) throw ShapeError("polygon_area: expected points x 2");
  return area_of(to_points(poly));
}

double ellipse_mismatch(const Ellipse& a, const Ellipse& b) {
  const auto pa = to_points(a.polyline);
  const auto pb = to_points(b.polyline);
  const double area_a = std::abs(area_of(pa));
  const double area_b = std::abs(area_of(pb));
  const auto inter = clip_convex(pa, pb);
  const double area_i = inter.size() < 3 ? 0.0 : std::abs(area_of(inter));
  const double uni = area_a + area_b - area_i;
  if (!(uni > 0)) throw DegenerateError("ellipse_mismatch: both ellipses have zero area");
  return (uni - area_i) / uni;
}

Diagnostics diagnostics(const SignalModel& signal, std::span<const RealizedCov> covs) {
  const Index k = signal.classes();
  if (static_cast<Index>(covs.size()) != k) throw ShapeError("diagnostics: need one covariance per class");
  Diagnostics dg;
  dg.n = signal.m.rows();
  dg.d = signal.m.cols();
  dg.r = signal.rank();
  const double r = static_cast<double>(dg.r);
  const double n = static_cast<double>(dg.n);
  const double d = static_cast<double>(dg.d);
  const double log_nd = std::log(std::max(n, d));
  constexpr double inf = std::numeric_limits<double>::infinity();

  dg.kappa = signal.lambdas[0] / signal.lambdas[dg.r - 1];
  dg.mu0 = incoherence_mu0(signal.u, signal.v);

  std::vector<double> sigma_k(static_cast<std::size_t>(k));
  for (Index c = 0; c < k; ++c) {
    sigma_k[static_cast<std::size_t>(c)] = std::sqrt(spectral_norm_sym(covs[static_cast<std::size_t>(c)].sigma));
  }
  dg.sigma = *std::max_element(sigma_k.begin(), sigma_k.end());
  dg.snr = dg.sigma > 0 ? snr(signal.lambdas, dg.sigma, dg.r, dg.d) : inf;

  double upper = 0.0;
  double lower = inf;
  double third = 0.0;
  const Mat& v = signal.v.cols();
  for (Index c = 0; c < k; ++c) {
    const RealizedCov& rc = covs[static_cast<std::size_t>(c)];
    for (Index j = 0; j < dg.r; ++j) {
      const Vec x = rc.root * v.col(j);
      const double len = x.norm();
      const double sc = sigma_k[static_cast<std::size_t>(c)];
      upper = std::max(upper, len > 0 ? dg.sigma / len : inf);
      lower = std::min(lower, len > 0 ? sc / len : inf);
      third = std::max(third, len > 0 ? x.cwiseAbs().array().cube().sum() / (len * len * len) : inf);
    }
  }
  dg.kappa_sigma_upper = upper;
  dg.kappa_sigma_lower = lower;
  dg.kappa_sigma = std::max(upper, lower > 0 ? 1.0 / lower : inf);

  const double ks = dg.kappa_sigma;
  const double u2inf = two_inf_norm(signal.u.cols());
  const double lr = signal.lambdas[dg.r - 1];
  auto add = [&](std::string name, std::string assumption, double value, bool gated) {
    std::optional<bool> pass;
    if (gated) pass = value >= 1.0;
    dg.margins.push_back(Margin{std::move(name), std::move(assumption), value, pass});
  };
  add("snr_over_kappa_sqrt_log", "enough_signal", dg.snr / (dg.kappa * std::sqrt(log_nd)), true);
  add("d_over_n", "high_dimensional_regime", d / n, true);
  add("n_over_log_d", "high_dimensional_regime", d > 1 ? n / std::log(d) : inf, true);
  add("sqrt_n_over_kappa2_mu0", "incoherence", std::sqrt(n) / (dg.kappa * dg.kappa * dg.mu0), true);
  add("v_two_inf_over_u_two_inf", "incoherence", two_inf_norm(v) / u2inf, false);
  dg.margins.push_back(Margin{"kappa_sigma", "covariance_condition_number", ks, std::isfinite(ks)});
  add("be_third_moment_ratio", "berry_esseen_scaling", third, false);
  add("be_snr_term", "berry_esseen_scaling",
      std::pow(dg.kappa, 3) * ks * dg.mu0 * r * log_nd / dg.snr, false);
  add("be_sample_term", "berry_esseen_scaling",
      dg.kappa * dg.kappa * ks * dg.mu0 * std::sqrt(r / n) *
          (std::sqrt(log_nd) + dg.mu0 * dg.kappa * dg.kappa * std::sqrt(r)),
      false);
  add("two_inf_error_scale", "two_inf_bound_scaling",
      (std::sqrt(r * n * d) * log_nd * dg.sigma * dg.sigma / (lr * lr) +
       std::sqrt(r * n * log_nd) * dg.kappa * dg.sigma / lr) *
          u2inf,
      false);
  return dg;
}

}  // namespace heterospectra
