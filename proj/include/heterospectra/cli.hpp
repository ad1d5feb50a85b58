#pragma once

// File-based workflows behind the heterospectra command-line tool.

#include "heterospectra/io.hpp"
#include "heterospectra/mcharness.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace heterospectra::cli {

namespace fs = std::filesystem;

/// A parsed run configuration. Exactly one of `spec` and `preset` is set.
struct RunConfig {
  std::optional<MixtureSpec> spec;
  std::string preset;
  PresetOptions preset_options;
  Index rank = 2;
  Index replicates = 1;
  std::optional<std::uint64_t> seed;
  std::vector<Method> methods{Method::hetero};
  std::vector<Index> rows{0};
  std::vector<Index> cols;
  double level = 0.95;
  double noise_scale = 1.0;
  double signal_scale = 1.0;
  std::vector<double> thetas;
  std::vector<double> noise_grid;
  std::vector<double> signal_grid;
  HeteroPcaConfig hetero;
  bool track_convergence = false;
  std::string text;  ///< the document as read, for the manifest hash
};

/// Validates against the schema; errors are ConfigErrors naming the field.
RunConfig parse_config(const json& doc);
RunConfig load_config(const fs::path& path);

/// The mixture for this config; `theta` overrides the angle preset's theta.
MixtureSpec resolve_spec(const RunConfig& cfg, std::optional<double> theta = std::nullopt);

/// --seed, then the config, then HETEROSPECTRA_SEED, then 0.
std::uint64_t resolve_seed(const RunConfig* cfg, std::optional<std::uint64_t> flag);

struct Options {
  fs::path out = ".";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

struct Manifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<fs::path> outputs;
  double wall_clock_seconds = 0.0;
};

/// Writes Mhat.csv, truth.json and manifest.json.
Manifest cmd_generate(const fs::path& config, const Options& opts);

/// `data` is a Mhat.csv file or a directory holding one. Writes Uhat.csv,
/// estimate.json and manifest.json.
Manifest cmd_estimate(const fs::path& data, Index rank, Method method, const Options& opts);

/// Monte Carlo exports (one theta_<value> subdirectory per angle), optional
/// comparison.json and slopes.json, and manifest.json.
Manifest cmd_mc(const fs::path& config, const Options& opts);

/// Diagnostics for a config file or a generated dataset directory. With an
/// estimate, also reports its sin-theta and l2,inf distance to the truth.
json cmd_diagnose(const fs::path& input, const std::optional<fs::path>& estimate,
                  const std::optional<fs::path>& out);

/// Full command-line entry point; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace heterospectra::cli
