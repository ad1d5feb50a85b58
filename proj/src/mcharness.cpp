#include "heterospectra/mcharness.hpp"

#include "heterospectra/error.hpp"
#include "heterospectra/io.hpp"
#include "heterospectra/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

namespace heterospectra {
namespace fs = std::filesystem;

namespace {

// Everything shared read-only by the replicates of one experiment.
struct Prepared {
  explicit Prepared(SignalModel s) : signal(std::move(s)) {}

  SignalModel signal;
  std::vector<RealizedCov> covs;
  Mat a;  // M M^T, only when the oracle or the convergence trace needs it
  EntrywiseLaw law;
  std::vector<Index> cols;
  std::vector<Mat> s_inv;
  std::vector<Mat> s_inv_sqrt;
  double chi2 = 0.0;
};

struct ReplicateOutput {
  ReplicateRecord record;
  std::vector<ErrorRow> rows;
};

bool needs_truth_gram(const ExperimentConfig& cfg) {
  return cfg.track_convergence ||
         std::find(cfg.methods.begin(), cfg.methods.end(), Method::oracle) != cfg.methods.end();
}

// Inverse and inverse square root of a symmetric positive definite r x r
// matrix, or empty matrices when it is singular (e.g. zero noise).
std::pair<Mat, Mat> inverse_pair(const Mat& s) {
  const SymEig eig = sym_eig(s, EigOptions{.method = EigMethod::jacobi});
  const double top = eig.values.maxCoeff();
  if (!(top > 0) || eig.values.minCoeff() <= 1e-12 * top) return {};
  const Mat& w = eig.vectors;
  return {w * eig.values.cwiseInverse().asDiagonal() * w.transpose(),
          w * eig.values.cwiseSqrt().cwiseInverse().asDiagonal() * w.transpose()};
}

Prepared prepare(const ExperimentConfig& cfg) {
  SignalModel signal = build_signal(cfg.spec);
  if (cfg.signal_scale != 1.0) signal = signal.scaled(cfg.signal_scale);
  Prepared p(std::move(signal));
  if (p.signal.rank() < cfg.rank) {
    throw ParameterError("experiment rank " + std::to_string(cfg.rank) + " exceeds the signal rank " +
                         std::to_string(p.signal.rank()));
  }
  if (p.signal.rank() > cfg.rank) {
    // Keep the leading cfg.rank components as the estimation target.
    p.signal = SignalModel{p.signal.m, Frame(p.signal.u.cols().leftCols(cfg.rank)),
                           p.signal.lambdas.head(cfg.rank), Frame(p.signal.v.cols().leftCols(cfg.rank)),
                           p.signal.labels};
  }
  p.covs = realize_covs(cfg.spec, p.signal, substream(cfg.design_seed.value_or(cfg.base_seed), StreamTag::design));
  if (needs_truth_gram(cfg)) p.a = gram(p.signal.m);

  std::vector<Mat> effective;
  for (const RealizedCov& c : p.covs) effective.push_back(cfg.noise_scale * cfg.noise_scale * c.sigma);
  p.law = entrywise_law(p.signal, effective);
  for (const Mat& s : p.law.per_class_s) {
    auto [inv, inv_sqrt] = inverse_pair(s);
    p.s_inv.push_back(std::move(inv));
    p.s_inv_sqrt.push_back(std::move(inv_sqrt));
  }
  if (cfg.cols.empty()) {
    p.cols.resize(static_cast<std::size_t>(cfg.rank));
    std::iota(p.cols.begin(), p.cols.end(), Index{0});
  } else {
    p.cols = cfg.cols;
  }
  p.chi2 = chi2_quantile(static_cast<int>(cfg.rank), cfg.level);
  return p;
}

SubspaceEstimate estimate(Method m, const Mat& ahat, const Prepared& p, const ExperimentConfig& cfg,
                          ReplicateRecord& rec) {
  HeteroPcaConfig hc = cfg.hetero;
  hc.rank = cfg.rank;
  switch (m) {
    case Method::hetero: {
      if (!cfg.track_convergence) return hetero_pca(ahat, hc);
      const double gz = spectral_norm_sym(hollow(ahat - p.a));
      const double lr = p.signal.lambdas[cfg.rank - 1];
      rec.rho = 10.0 * gz / (lr * lr);
      return hetero_pca(ahat, hc, [&](Index t, const Mat& iterate) {
        if (!rec.t0 && spectral_norm_sym(iterate - p.a) <= 3.0 * gz) rec.t0 = t;
      });
    }
    case Method::deletion:
      return diagonal_deletion_pca(ahat, cfg.rank, hc.truncation);
    case Method::vanilla:
      return vanilla_pca(ahat, cfg.rank, hc.truncation);
    case Method::oracle:
      return idealized_oracle(p.a, ahat - p.a, cfg.rank, hc.truncation);
  }
  throw ParameterError("unknown method");
}

double spectral_norm_general(const Mat& a) {
  return Eigen::JacobiSVD<Mat>(a).singularValues()(0);
}

ReplicateOutput run_replicate(const Prepared& p, const ExperimentConfig& cfg, Index t) {
  ReplicateOutput out;
  ReplicateRecord& rec = out.record;
  rec.replicate = t;
  const Index k = p.signal.classes();
  const Index r = cfg.rank;

  Mat e = sample_noise(p.signal, p.covs, cfg.spec.noise_driver,
                       substream(cfg.base_seed, StreamTag::replicate, static_cast<std::uint64_t>(t)));
  if (cfg.noise_scale != 1.0) e *= cfg.noise_scale;
  const Mat ahat = gram(p.signal.m + e);

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const SubspaceEstimate est = estimate(cfg.methods[mi], ahat, p, cfg, rec);
    const AlignedRows al = align_and_extract(est.frame, p.signal, cfg.rows);
    rec.l2inf.push_back(two_inf_norm(al.error));
    rec.iterations.push_back(est.iterations);

    std::vector<Vec> sums(static_cast<std::size_t>(k), Vec::Zero(r));
    std::vector<double> norms(static_cast<std::size_t>(k), 0.0);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < al.error.rows(); ++i) {
      const auto c = static_cast<std::size_t>(p.signal.labels[static_cast<std::size_t>(i)]);
      sums[c] += al.error.row(i).transpose();
      norms[c] += al.error.row(i).norm();
      ++counts[c];
    }
    std::vector<double> centroid(static_cast<std::size_t>(k));
    std::vector<double> mean_row(static_cast<std::size_t>(k));
    for (std::size_t c = 0; c < centroid.size(); ++c) {
      centroid[c] = sums[c].norm() / static_cast<double>(counts[c]);
      mean_row[c] = norms[c] / static_cast<double>(counts[c]);
    }
    rec.class_centroid_error.push_back(std::move(centroid));
    rec.class_mean_row_error.push_back(std::move(mean_row));

    if (mi != 0) continue;
    for (std::size_t q = 0; q < cfg.rows.size(); ++q) {
      out.rows.push_back(ErrorRow{t, cfg.rows[q], al.raw.row(static_cast<Index>(q)).transpose(),
                                  al.scaled.row(static_cast<Index>(q)).transpose()});
    }
    const Mat aligned = est.frame.cols() * al.o;
    const ClassCovEstimate cc = class_cov_estimate(aligned, p.signal.labels);
    const Mat eye = Mat::Identity(r, r);
    for (Index c = 0; c < k; ++c) {
      const auto cu = static_cast<std::size_t>(c);
      if (p.s_inv[cu].size() == 0) {
        rec.cov_consistency.push_back(std::numeric_limits<double>::quiet_NaN());
        rec.cov_consistency_whitened.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      rec.cov_consistency.push_back(spectral_norm_general(p.s_inv[cu] * cc.s_hat[cu] - eye));
      const Mat w = p.s_inv_sqrt[cu] * cc.s_hat[cu] * p.s_inv_sqrt[cu];
      rec.cov_consistency_whitened.push_back(spectral_norm_sym(0.5 * (w + w.transpose()) - eye));
    }
    try {
      const Mat piv = pivots(aligned, cc, p.signal.labels);
      for (Index i : cfg.rows) {
        ++rec.pivots_total;
        if (piv.row(i).squaredNorm() <= p.chi2) ++rec.pivots_inside;
      }
    } catch (const DegenerateError&) {
      // No pivot can be formed; coverage for this replicate is undefined.
    }
  }
  rec.ok = true;
  return out;
}

std::vector<ReplicateOutput> run_all(const Prepared& p, const ExperimentConfig& cfg) {
  std::vector<ReplicateOutput> outs(static_cast<std::size_t>(cfg.replicates));
  auto work = [&](Index t) {
    try {
      outs[static_cast<std::size_t>(t)] = run_replicate(p, cfg, t);
    } catch (const std::exception& ex) {
      ReplicateOutput failed;
      failed.record.replicate = t;
      failed.record.error = ex.what();
      outs[static_cast<std::size_t>(t)] = std::move(failed);
    }
  };
  const unsigned threads =
      std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(cfg.replicates)));
  if (threads == 1) {
    for (Index t = 0; t < cfg.replicates; ++t) work(t);
    return outs;
  }
  std::atomic<Index> next{0};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (Index t = next++; t < cfg.replicates; t = next++) work(t);
    });
  }
  pool.clear();
  return outs;
}

Mat sample_cov(const std::vector<Vec>& xs, Vec& mean) {
  const Index r = xs.front().size();
  mean = Vec::Zero(r);
  for (const Vec& x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  Mat s = Mat::Zero(r, r);
  for (const Vec& x : xs) s.noalias() += (x - mean) * (x - mean).transpose();
  return s / static_cast<double>(xs.size() - 1);
}

void write_csv(const fs::path& path, const std::string& header, const std::vector<std::vector<std::string>>& lines) {
  std::string text = header + "\n";
  for (const auto& fields : lines) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) text += ',';
      text += fields[i];
    }
    text += '\n';
  }
  write_text_file(path, text);
}

std::string ellipse_csv(const Ellipse& e) {
  std::string text = "x,y\n";
  for (Index i = 0; i < e.polyline.rows(); ++i) {
    text += format_double(e.polyline(i, 0)) + "," + format_double(e.polyline(i, 1)) + "\n";
  }
  return text;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::hetero: return "hetero";
    case Method::deletion: return "deletion";
    case Method::vanilla: return "vanilla";
    case Method::oracle: return "oracle";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::hetero, Method::deletion, Method::vanilla, Method::oracle}) {
    if (method_name(m) == name) return m;
  }
  throw ParameterError("unknown method '" + std::string(name) + "'");
}

void ExperimentConfig::validate() const {
  spec.validate();
  if (replicates < 1) throw ParameterError("replicates must be >= 1");
  if (rank < 1) throw ParameterError("rank must be >= 1");
  if (rank >= spec.n()) throw ParameterError("rank must be below n");
  if (methods.empty()) throw ParameterError("at least one method is required");
  if (!(level > 0 && level < 1)) throw ParameterError("level must lie in (0, 1)");
  if (!(noise_scale >= 0) || !std::isfinite(noise_scale)) throw ParameterError("noise_scale must be >= 0");
  if (!(signal_scale > 0) || !std::isfinite(signal_scale)) throw ParameterError("signal_scale must be > 0");
  if (ellipse_points < 3) throw ParameterError("ellipse_points must be >= 3");
  for (Index i : rows) {
    if (i < 0 || i >= spec.n()) throw ParameterError("tracked row " + std::to_string(i) + " out of range");
  }
  for (Index j : cols) {
    if (j < 0 || j >= rank) throw ParameterError("tracked column " + std::to_string(j) + " out of range");
  }
}

AlignedRows align_and_extract(const Frame& uhat, const SignalModel& signal, std::span<const Index> rows) {
  if (uhat.n() != signal.u.n() || uhat.r() != signal.u.r()) {
    throw ShapeError("align_and_extract: estimate and truth frames differ in shape");
  }
  AlignedRows out;
  out.o = procrustes(uhat, signal.u);
  out.error = uhat.cols() * out.o - signal.u.cols();
  out.raw.resize(static_cast<Index>(rows.size()), uhat.r());
  for (std::size_t q = 0; q < rows.size(); ++q) {
    if (rows[q] < 0 || rows[q] >= uhat.n()) throw ParameterError("align_and_extract: row out of range");
    out.raw.row(static_cast<Index>(q)) = out.error.row(rows[q]);
  }
  out.scaled = out.raw * signal.lambdas.asDiagonal();
  return out;
}

double ks_stat(std::span<const double> samples) {
  if (samples.size() < 2) throw ParameterError("ks_stat: need at least 2 samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double phi = 0.5 * std::erfc(-x[i] / std::sqrt(2.0));
    d = std::max({d, static_cast<double>(i + 1) / n - phi, phi - static_cast<double>(i) / n});
  }
  return d;
}

std::vector<double> McSummary::l2inf_of(std::size_t m) const {
  std::vector<double> out;
  for (const ReplicateRecord& r : replicates) {
    if (r.ok) out.push_back(r.l2inf.at(m));
  }
  return out;
}

McSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Prepared p = prepare(cfg);
  std::vector<ReplicateOutput> outs = run_all(p, cfg);

  McSummary s;
  s.methods = cfg.methods;
  s.rank = cfg.rank;
  s.level = cfg.level;
  s.tracked_rows = cfg.rows;
  s.tracked_cols = p.cols;
  s.lambdas = p.signal.lambdas;
  Index inside = 0;
  Index total = 0;
  for (ReplicateOutput& o : outs) {
    if (!o.record.ok) ++s.failures;
    inside += o.record.pivots_inside;
    total += o.record.pivots_total;
    for (ErrorRow& row : o.rows) s.rows.push_back(std::move(row));
    s.replicates.push_back(std::move(o.record));
  }
  if (static_cast<double>(s.failures) > 0.2 * static_cast<double>(cfg.replicates)) {
    std::string first;
    for (const ReplicateRecord& r : s.replicates) {
      if (!r.ok) {
        first = r.error;
        break;
      }
    }
    throw ExperimentError(std::to_string(s.failures) + " of " + std::to_string(cfg.replicates) +
                          " replicates failed (first: " + first + ")");
  }
  if (total > 0) {
    s.coverage = static_cast<double>(inside) / static_cast<double>(total);
  } else {
    s.coverage_flag = "no pivot could be formed: every class covariance estimate was singular";
  }

  for (Index i : cfg.rows) {
    for (Index j : p.cols) {
      const double sd = p.law.sigma(i, j);
      KsEntry entry{i, j, 0, std::numeric_limits<double>::quiet_NaN()};
      std::vector<double> z;
      if (sd > 0) {
        for (const ErrorRow& row : s.rows) {
          if (row.row == i) z.push_back(row.raw[j] / sd);
        }
      }
      entry.samples = static_cast<Index>(z.size());
      if (z.size() >= 2) entry.ks = ks_stat(z);
      s.ks.push_back(entry);
    }
  }

  if (cfg.rank == 2) {
    for (Index i : cfg.rows) {
      std::vector<Vec> xs;
      for (const ErrorRow& row : s.rows) {
        if (row.row == i) xs.push_back(row.raw);
      }
      if (xs.size() < 3) continue;
      try {
        const auto c = static_cast<std::size_t>(p.signal.labels[static_cast<std::size_t>(i)]);
        EllipseRecord er;
        er.row = i;
        er.theoretical = ellipse(p.law.per_class_s[c], cfg.level, cfg.ellipse_points);
        Vec mean;
        const Mat emp = sample_cov(xs, mean);
        er.empirical = ellipse(emp, cfg.level, cfg.ellipse_points, mean);
        er.mismatch = ellipse_mismatch(er.theoretical, er.empirical);
        s.ellipses.push_back(std::move(er));
      } catch (const DegenerateError&) {
        // Zero-noise runs have no ellipse to draw.
      }
    }
  }
  return s;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw ParameterError("quantile of an empty sample");
  if (!(prob >= 0 && prob <= 1)) throw ParameterError("quantile: probability must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = prob * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

MethodComparison method_comparison(const ExperimentConfig& cfg) {
  if (cfg.methods.size() < 2) throw ParameterError("method_comparison: need at least two methods");
  MethodComparison mc;
  mc.summary = run_experiment(cfg);
  const std::size_t k = static_cast<std::size_t>(cfg.spec.classes());
  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    MethodStats st;
    st.method = cfg.methods[m];
    const auto l2 = mc.summary.l2inf_of(m);
    st.median_l2inf = median(l2);
    st.q25_l2inf = quantile(l2, 0.25);
    st.q75_l2inf = quantile(l2, 0.75);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> centroid;
      std::vector<double> mean_row;
      for (const ReplicateRecord& r : mc.summary.replicates) {
        if (!r.ok) continue;
        centroid.push_back(r.class_centroid_error[m][c]);
        mean_row.push_back(r.class_mean_row_error[m][c]);
      }
      st.median_class_centroid_error.push_back(median(centroid));
      st.median_class_mean_row_error.push_back(median(mean_row));
    }
    mc.methods.push_back(std::move(st));
  }
  return mc;
}

ScalingResult scaling_study(const ExperimentConfig& cfg, std::span<const double> grid, ScalingKind kind) {
  if (grid.size() < 4) throw ParameterError("scaling_study: need at least 4 grid points");
  for (double g : grid) {
    if (!(g > 0) || !std::isfinite(g)) throw ParameterError("scaling_study: grid values must be positive");
  }
  ScalingResult res;
  res.kind = kind;
  const SignalModel base = build_signal(cfg.spec);
  const auto covs = realize_covs(cfg.spec, base, substream(cfg.design_seed.value_or(cfg.base_seed), StreamTag::design));

  std::vector<double> xs;
  std::vector<double> ys;
  for (double g : grid) {
    ExperimentConfig c = cfg;
    double noise = cfg.noise_scale;
    double signal = cfg.signal_scale;
    (kind == ScalingKind::noise ? noise : signal) = g;
    c.noise_scale = noise;
    c.signal_scale = signal;
    const McSummary s = run_experiment(c);

    std::vector<RealizedCov> scaled;
    for (const RealizedCov& rc : covs) {
      scaled.push_back(RealizedCov{noise * noise * rc.sigma, noise * rc.root,
                                   rc.spherical_sd ? std::optional<double>(noise * *rc.spherical_sd) : std::nullopt});
    }
    const Diagnostics dg = diagnostics(base.scaled(signal), scaled);
    ScalingPoint pt;
    pt.scale = g;
    pt.median_l2inf = median(s.l2inf_of(0));
    pt.snr_margin = dg.margins.front().value;
    pt.in_regime = dg.margins.front().pass.value_or(false);
    if (!pt.in_regime) {
      res.warnings.push_back("scale " + format_double(g) + " is outside the enough-signal regime (margin " +
                             format_double(pt.snr_margin) + ")");
    }
    res.points.push_back(pt);
    xs.push_back(std::log(g));
    ys.push_back(std::log(pt.median_l2inf));
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (!(sxx > 0)) throw ParameterError("scaling_study: grid values must not all coincide");
  res.slope = sxy / sxx;
  res.intercept = my - res.slope * mx;
  return res;
}

std::vector<fs::path> export_summary(const McSummary& s, const fs::path& dir) {
  std::vector<fs::path> written;

  std::vector<std::vector<std::string>> lines;
  for (const ErrorRow& row : s.rows) {
    for (Index j : s.tracked_cols) {
      lines.push_back({std::to_string(row.replicate), std::to_string(row.row), std::to_string(j),
                       format_double(row.raw[j]), format_double(row.scaled[j])});
    }
  }
  write_csv(dir / "rows.csv", "replicate,row,col,raw,lambda_scaled", lines);
  written.push_back(dir / "rows.csv");

  lines.clear();
  for (const KsEntry& k : s.ks) {
    lines.push_back({std::to_string(k.row), std::to_string(k.col), std::to_string(k.samples),
                     std::isfinite(k.ks) ? format_double(k.ks) : ""});
  }
  write_csv(dir / "ks.csv", "row,col,samples,ks", lines);
  written.push_back(dir / "ks.csv");

  Index inside = 0;
  Index total = 0;
  for (const ReplicateRecord& r : s.replicates) {
    inside += r.pivots_inside;
    total += r.pivots_total;
  }
  json cov{{"level", s.level},
           {"coverage", s.coverage ? json(*s.coverage) : json(nullptr)},
           {"inside", inside},
           {"total", total},
           {"replicates", s.replicates.size()},
           {"failures", s.failures}};
  if (!s.coverage_flag.empty()) cov["flag"] = s.coverage_flag;
  write_text_file(dir / "coverage.json", cov.dump(2) + "\n");
  written.push_back(dir / "coverage.json");

  lines.clear();
  for (const ReplicateRecord& r : s.replicates) {
    if (!r.ok) continue;
    for (std::size_t m = 0; m < s.methods.size(); ++m) {
      lines.push_back({std::to_string(r.replicate), std::string(method_name(s.methods[m])), format_double(r.l2inf[m])});
    }
  }
  write_csv(dir / "l2inf.csv", "replicate,method,l2inf", lines);
  written.push_back(dir / "l2inf.csv");

  for (const EllipseRecord& e : s.ellipses) {
    const std::string suffix = s.ellipses.size() == 1 ? "" : "_row" + std::to_string(e.row);
    const fs::path th = dir / ("ellipse_theoretical" + suffix + ".csv");
    const fs::path em = dir / ("ellipse_empirical" + suffix + ".csv");
    write_text_file(th, ellipse_csv(e.theoretical));
    write_text_file(em, ellipse_csv(e.empirical));
    written.push_back(th);
    written.push_back(em);
  }
  return written;
}

fs::path export_slopes(std::span<const ScalingResult> results, const fs::path& dir) {
  json arr = json::array();
  for (const ScalingResult& r : results) {
    json pts = json::array();
    for (const ScalingPoint& p : r.points) {
      pts.push_back({{"scale", p.scale},
                     {"median_l2inf", p.median_l2inf},
                     {"snr_margin", json_or_null(p.snr_margin)},
                     {"in_regime", p.in_regime}});
    }
    arr.push_back({{"kind", r.kind == ScalingKind::noise ? "noise" : "signal"},
                   {"slope", r.slope},
                   {"intercept", r.intercept},
                   {"points", pts},
                   {"warnings", r.warnings}});
  }
  const fs::path path = dir / "slopes.json";
  write_text_file(path, arr.dump(2) + "\n");
  return path;
}

}  // namespace heterospectra
