#include "heterospectra/cli.hpp"

#include "heterospectra/error.hpp"
#include "heterospectra/random.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <thread>

namespace heterospectra::cli {
namespace {

using Clock = std::chrono::steady_clock;

std::string fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Shortest round-trip spelling, used for directory names such as theta_0.9.
std::string short_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir.string() + "'");
  }
}

void finish(Manifest& m, const fs::path& out, Clock::time_point start) {
  m.wall_clock_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  json outputs = json::array();
  for (const fs::path& p : m.outputs) outputs.push_back(p.lexically_relative(out).generic_string());
  const json doc{{"command", m.command},
                 {"config_hash", m.config_hash},
                 {"seed", m.seed},
                 {"version", HETEROSPECTRA_VERSION},
                 {"outputs", outputs},
                 {"started_at", utc_now()},
                 {"wall_clock_seconds", m.wall_clock_seconds}};
  write_text_file(out / "manifest.json", doc.dump(2) + "\n");
}

MixtureSpec scaled_means(MixtureSpec spec, double c) {
  for (Vec& mu : spec.means) mu *= c;
  return spec;
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

fs::path file_in(const fs::path& p, const char* name) { return fs::is_directory(p) ? p / name : p; }

ExperimentConfig experiment_config(const RunConfig& rc, MixtureSpec spec, std::uint64_t seed, unsigned threads) {
  ExperimentConfig ec;
  ec.spec = std::move(spec);
  ec.rank = rc.rank;
  ec.replicates = rc.replicates;
  ec.base_seed = seed;
  ec.methods = rc.methods;
  ec.rows = rc.rows;
  ec.cols = rc.cols;
  ec.level = rc.level;
  ec.noise_scale = rc.noise_scale;
  ec.signal_scale = rc.signal_scale;
  ec.hetero = rc.hetero;
  ec.track_convergence = rc.track_convergence;
  ec.threads = threads;
  try {
    ec.validate();
  } catch (const ParameterError& e) {
    throw ConfigError("", e.what());
  }
  return ec;
}

json comparison_json(const MethodComparison& mc) {
  json arr = json::array();
  for (const MethodStats& st : mc.methods) {
    arr.push_back({{"method", std::string(method_name(st.method))},
                   {"median_l2inf", st.median_l2inf},
                   {"q25_l2inf", st.q25_l2inf},
                   {"q75_l2inf", st.q75_l2inf},
                   {"median_class_centroid_error", st.median_class_centroid_error},
                   {"median_class_mean_row_error", st.median_class_mean_row_error}});
  }
  return arr;
}

std::string convergence_csv(const McSummary& s) {
  std::string text = "replicate,iterations,rho,t0\n";
  for (const ReplicateRecord& r : s.replicates) {
    if (!r.ok) continue;
    text += std::to_string(r.replicate) + "," + std::to_string(r.iterations.front()) + "," +
            (r.rho ? format_double(*r.rho) : "") + "," + (r.t0 ? std::to_string(*r.t0) : "") + "\n";
  }
  return text;
}

void run_mc_into(const RunConfig& rc, const MixtureSpec& spec, std::uint64_t seed, unsigned threads,
                 const fs::path& dir, Manifest& m) {
  ensure_dir(dir);
  const ExperimentConfig ec = experiment_config(rc, spec, seed, threads);
  McSummary summary;
  if (ec.methods.size() >= 2) {
    MethodComparison mc = method_comparison(ec);
    write_text_file(dir / "comparison.json", comparison_json(mc).dump(2) + "\n");
    m.outputs.push_back(dir / "comparison.json");
    summary = std::move(mc.summary);
  } else {
    summary = run_experiment(ec);
  }
  for (const fs::path& p : export_summary(summary, dir)) m.outputs.push_back(p);
  if (ec.track_convergence) {
    write_text_file(dir / "convergence.csv", convergence_csv(summary));
    m.outputs.push_back(dir / "convergence.csv");
  }
  std::vector<ScalingResult> studies;
  if (!rc.noise_grid.empty()) studies.push_back(scaling_study(ec, rc.noise_grid, ScalingKind::noise));
  if (!rc.signal_grid.empty()) studies.push_back(scaling_study(ec, rc.signal_grid, ScalingKind::signal));
  if (!studies.empty()) m.outputs.push_back(export_slopes(studies, dir));
}

// Signal and realized covariances (scaled by the noise level) for diagnostics.
struct Truth {
  SignalModel signal;
  std::vector<RealizedCov> covs;
};

Truth truth_for(const MixtureSpec& spec, std::uint64_t seed, double noise_scale, double signal_scale) {
  SignalModel signal = build_signal(spec);
  if (signal_scale != 1.0) signal = signal.scaled(signal_scale);
  std::vector<RealizedCov> covs = realize_covs(spec, signal, substream(seed, StreamTag::design));
  for (RealizedCov& c : covs) {
    c.sigma *= noise_scale * noise_scale;
    c.root *= noise_scale;
    if (c.spherical_sd) *c.spherical_sd *= noise_scale;
  }
  return Truth{std::move(signal), std::move(covs)};
}

}  // namespace

Manifest cmd_generate(const fs::path& config, const Options& opts) {
  const auto start = Clock::now();
  const RunConfig rc = load_config(config);
  const std::uint64_t seed = resolve_seed(&rc, opts.seed);
  const MixtureSpec spec = scaled_means(resolve_spec(rc), rc.signal_scale);
  ensure_dir(opts.out);
  const Dataset ds = generate(spec, seed, rc.noise_scale);

  Manifest m{"generate", fnv1a(rc.text), seed, {}, 0.0};
  write_matrix_csv(opts.out / "Mhat.csv", ds.mhat);
  const json truth{{"U", to_json(ds.signal.u.cols())},
                   {"lambdas", vec_json(ds.signal.lambdas)},
                   {"V", to_json(ds.signal.v.cols())},
                   {"labels", ds.signal.labels},
                   {"seed", seed},
                   {"noise_scale", rc.noise_scale},
                   {"spec", to_json(spec)}};
  write_text_file(opts.out / "truth.json", truth.dump(2) + "\n");
  m.outputs = {opts.out / "Mhat.csv", opts.out / "truth.json"};
  finish(m, opts.out, start);
  return m;
}

Manifest cmd_estimate(const fs::path& data, Index rank, Method method, const Options& opts) {
  const auto start = Clock::now();
  if (method == Method::oracle) throw ParameterError("estimate: the oracle needs the truth; use hetero, deletion or vanilla");
  const fs::path input = file_in(data, "Mhat.csv");
  if (!fs::exists(input)) throw IoError("input '" + input.string() + "' does not exist");
  const Mat mhat = read_matrix_csv(input);
  if (rank < 1 || rank >= mhat.rows()) {
    throw ParameterError("rank " + std::to_string(rank) + " must lie in [1, n - 1] with n = " +
                         std::to_string(mhat.rows()));
  }
  ensure_dir(opts.out);
  const Mat ahat = gram(mhat);
  SubspaceEstimate est = method == Method::hetero     ? hetero_pca(ahat, HeteroPcaConfig{.rank = rank})
                         : method == Method::deletion ? diagonal_deletion_pca(ahat, rank)
                                                      : vanilla_pca(ahat, rank);
  Manifest m{"estimate", fnv1a(read_text_file(input)), 0, {}, 0.0};
  write_matrix_csv(opts.out / "Uhat.csv", est.frame.cols());
  json doc = to_json(est);
  doc["method"] = std::string(method_name(method));
  doc["rank"] = rank;
  doc["input"] = input.generic_string();
  write_text_file(opts.out / "estimate.json", doc.dump(2) + "\n");
  m.outputs = {opts.out / "Uhat.csv", opts.out / "estimate.json"};
  finish(m, opts.out, start);
  return m;
}

Manifest cmd_mc(const fs::path& config, const Options& opts) {
  const auto start = Clock::now();
  const RunConfig rc = load_config(config);
  const std::uint64_t seed = resolve_seed(&rc, opts.seed);
  Manifest m{"mc", fnv1a(rc.text), seed, {}, 0.0};
  ensure_dir(opts.out);
  if (rc.thetas.empty()) {
    run_mc_into(rc, resolve_spec(rc), seed, opts.threads, opts.out, m);
  } else {
    // Every angle reuses the seed, so only the class-2 covariance changes.
    for (double theta : rc.thetas) {
      run_mc_into(rc, resolve_spec(rc, theta), seed, opts.threads, opts.out / ("theta_" + short_number(theta)), m);
    }
  }
  finish(m, opts.out, start);
  return m;
}

json cmd_diagnose(const fs::path& input, const std::optional<fs::path>& estimate, const std::optional<fs::path>& out) {
  const auto start = Clock::now();
  const fs::path path = file_in(input, "truth.json");
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path.string() + ": invalid JSON: " + e.what());
  }

  std::uint64_t seed = 0;
  std::optional<Truth> truth;
  std::string description;
  if (doc.is_object() && doc.contains("U") && doc.contains("spec")) {
    const MixtureSpec spec = spec_from_json(doc.at("spec"), "spec");
    seed = doc.value("seed", std::uint64_t{0});
    truth = truth_for(spec, seed, doc.value("noise_scale", 1.0), 1.0);
    description = spec.description;
  } else {
    const RunConfig rc = parse_config(doc);
    seed = resolve_seed(&rc, std::nullopt);
    const MixtureSpec spec = resolve_spec(rc);
    truth = truth_for(spec, seed, rc.noise_scale, rc.signal_scale);
    description = spec.description;
  }

  json result = to_json(diagnostics(truth->signal, truth->covs));
  if (!description.empty()) result["description"] = description;
  if (estimate) {
    const Mat uhat = read_matrix_csv(file_in(*estimate, "Uhat.csv"));
    if (uhat.rows() != truth->signal.u.n() || uhat.cols() != truth->signal.u.r()) {
      throw ShapeError("estimate has shape " + std::to_string(uhat.rows()) + "x" + std::to_string(uhat.cols()) +
                       ", truth U is " + std::to_string(truth->signal.u.n()) + "x" +
                       std::to_string(truth->signal.u.r()));
    }
    const Frame f = Frame::orthonormalize(uhat);
    const AlignedRows al = align_and_extract(f, truth->signal, {});
    result["estimate"] = {{"sin_theta", sin_theta(f, truth->signal.u)}, {"l2inf", two_inf_norm(al.error)}};
  }
  if (out) {
    ensure_dir(*out);
    Manifest m{"diagnose", fnv1a(text), seed, {*out / "diagnostics.json"}, 0.0};
    write_text_file(*out / "diagnostics.json", result.dump(2) + "\n");
    finish(m, *out, start);
  }
  return result;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Heteroskedastic PCA estimation, entrywise inference and Monte Carlo experiments"};
  app.set_version_flag("--version", std::string(HETEROSPECTRA_VERSION));
  app.require_subcommand(1);

  Options opts;
  opts.threads = std::max(1u, std::thread::hardware_concurrency());
  std::uint64_t seed_flag = 0;
  fs::path config;
  fs::path data;
  Index rank = 0;
  std::string method = "hetero";
  std::string estimate_path;
  std::string diag_out;

  auto add_seed = [&](CLI::App* sub) {
    return sub->add_option("--seed", seed_flag, "Master seed (overrides the config and HETEROSPECTRA_SEED)");
  };

  CLI::App* gen = app.add_subcommand("generate", "Sample a dataset from a config");
  gen->add_option("--config", config, "Config JSON")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", opts.out, "Output directory")->required();
  CLI::Option* gen_seed = add_seed(gen);

  CLI::App* est = app.add_subcommand("estimate", "Estimate the left singular subspace of Mhat.csv");
  est->add_option("data", data, "Mhat.csv or a directory holding it")->required();
  est->add_option("--rank", rank, "Target rank")->required();
  est->add_option("--method", method, "hetero, deletion or vanilla")->check(CLI::IsMember({"hetero", "deletion", "vanilla"}));
  est->add_option("--out", opts.out, "Output directory")->required();

  CLI::App* mc = app.add_subcommand("mc", "Run a Monte Carlo experiment");
  mc->add_option("--config", config, "Config JSON")->required()->check(CLI::ExistingFile);
  mc->add_option("--out", opts.out, "Output directory")->required();
  mc->add_option("--threads", opts.threads, "Worker threads")->check(CLI::PositiveNumber);
  CLI::Option* mc_seed = add_seed(mc);

  CLI::App* diag = app.add_subcommand("diagnose", "Print assumption diagnostics as JSON");
  diag->add_option("input", data, "Config JSON, truth.json or a generated dataset directory")->required();
  diag->add_option("--estimate", estimate_path, "Uhat.csv (or its directory) to compare with the truth");
  diag->add_option("--out", diag_out, "Also write diagnostics.json and manifest.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version exit cleanly; any other parse failure is a usage error.
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      if (*gen_seed) opts.seed = seed_flag;
      cmd_generate(config, opts);
    } else if (est->parsed()) {
      cmd_estimate(data, rank, parse_method(method), opts);
    } else if (mc->parsed()) {
      if (*mc_seed) opts.seed = seed_flag;
      cmd_mc(config, opts);
    } else if (diag->parsed()) {
      const json result = cmd_diagnose(data, estimate_path.empty() ? std::nullopt : std::optional<fs::path>(estimate_path),
                                       diag_out.empty() ? std::nullopt : std::optional<fs::path>(diag_out));
      out << result.dump(2) << "\n";
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace heterospectra::cli
