#include "heterospectra/cli.hpp"

#include "heterospectra/error.hpp"

#include <cstdlib>
#include <set>

namespace heterospectra::cli {
namespace {

const std::set<std::string> kPresets{"figure1", "figure2", "elliptical", "spherical_reference", "angle"};

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& field) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) {
      throw ConfigError(field.empty() ? key : field + "." + key, "unknown key");
    }
  }
}

double get_number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  return j.get<double>();
}

Index get_count(const json& j, const std::string& field, Index min) {
  if (!j.is_number_integer()) throw ConfigError(field, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < min) throw ConfigError(field, "must be >= " + std::to_string(min));
  return static_cast<Index>(v);
}

std::vector<double> get_numbers(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_number(j[i], field + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<Index> get_indices(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array of integers");
  std::vector<Index> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_count(j[i], field + "[" + std::to_string(i) + "]", 0));
  return out;
}

}  // namespace

RunConfig parse_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("", "config must be a JSON object");
  reject_unknown(doc,
                 {"spec", "preset", "preset_options", "rank", "replicates", "seed", "methods", "outputs", "level",
                  "noise_scale", "signal_scale", "thetas", "scaling", "hetero", "track_convergence"},
                 "");
  RunConfig cfg;
  cfg.text = doc.dump();

  const bool has_spec = doc.contains("spec");
  const bool has_preset = doc.contains("preset");
  if (has_spec == has_preset) throw ConfigError("spec", "exactly one of 'spec' and 'preset' is required");
  if (has_spec) {
    cfg.spec = spec_from_json(doc.at("spec"), "spec");
  } else {
    const json& p = doc.at("preset");
    if (!p.is_string() || !kPresets.contains(p.get<std::string>())) {
      throw ConfigError("preset", "unknown preset " + p.dump() +
                                      " (expected figure1, figure2, elliptical, spherical_reference or angle)");
    }
    cfg.preset = p.get<std::string>();
  }
  if (doc.contains("preset_options")) {
    if (!has_preset) throw ConfigError("preset_options", "only valid together with 'preset'");
    const json& po = doc.at("preset_options");
    if (!po.is_object()) throw ConfigError("preset_options", "expected an object");
    reject_unknown(po, {"n", "d", "theta"}, "preset_options");
    if (po.contains("n")) cfg.preset_options.n = get_count(po.at("n"), "preset_options.n", 1);
    if (po.contains("d")) cfg.preset_options.d = get_count(po.at("d"), "preset_options.d", 1);
    if (po.contains("theta")) cfg.preset_options.theta = get_number(po.at("theta"), "preset_options.theta");
  }

  if (doc.contains("rank")) cfg.rank = get_count(doc.at("rank"), "rank", 1);
  if (doc.contains("replicates")) cfg.replicates = get_count(doc.at("replicates"), "replicates", 1);
  if (doc.contains("seed")) {
    const json& s = doc.at("seed");
    if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<std::int64_t>() >= 0)) {
      throw ConfigError("seed", "expected a nonnegative integer");
    }
    cfg.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("methods")) {
    const json& m = doc.at("methods");
    if (!m.is_array() || m.empty()) throw ConfigError("methods", "expected a nonempty array of method names");
    cfg.methods.clear();
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string field = "methods[" + std::to_string(i) + "]";
      if (!m[i].is_string()) throw ConfigError(field, "expected a string");
      try {
        cfg.methods.push_back(parse_method(m[i].get<std::string>()));
      } catch (const ParameterError& e) {
        throw ConfigError(field, e.what());
      }
    }
  }
  if (doc.contains("outputs")) {
    const json& o = doc.at("outputs");
    if (!o.is_object()) throw ConfigError("outputs", "expected an object");
    reject_unknown(o, {"rows", "cols"}, "outputs");
    if (o.contains("rows")) cfg.rows = get_indices(o.at("rows"), "outputs.rows");
    if (o.contains("cols")) cfg.cols = get_indices(o.at("cols"), "outputs.cols");
  }
  if (doc.contains("level")) {
    cfg.level = get_number(doc.at("level"), "level");
    if (!(cfg.level > 0 && cfg.level < 1)) throw ConfigError("level", "must lie in (0, 1)");
  }
  if (doc.contains("noise_scale")) cfg.noise_scale = get_number(doc.at("noise_scale"), "noise_scale");
  if (doc.contains("signal_scale")) cfg.signal_scale = get_number(doc.at("signal_scale"), "signal_scale");
  if (doc.contains("thetas")) {
    if (cfg.preset != "angle") throw ConfigError("thetas", "only valid with preset 'angle'");
    cfg.thetas = get_numbers(doc.at("thetas"), "thetas");
    for (std::size_t i = 0; i < cfg.thetas.size(); ++i) {
      if (!(cfg.thetas[i] >= 0 && cfg.thetas[i] <= 1)) {
        throw ConfigError("thetas[" + std::to_string(i) + "]", "must lie in [0, 1]");
      }
    }
  }
  if (doc.contains("scaling")) {
    const json& s = doc.at("scaling");
    if (!s.is_object()) throw ConfigError("scaling", "expected an object");
    reject_unknown(s, {"noise_grid", "signal_grid"}, "scaling");
    if (s.contains("noise_grid")) cfg.noise_grid = get_numbers(s.at("noise_grid"), "scaling.noise_grid");
    if (s.contains("signal_grid")) cfg.signal_grid = get_numbers(s.at("signal_grid"), "scaling.signal_grid");
    for (const auto* grid : {&cfg.noise_grid, &cfg.signal_grid}) {
      if (!grid->empty() && grid->size() < 4) {
        throw ConfigError(grid == &cfg.noise_grid ? "scaling.noise_grid" : "scaling.signal_grid",
                          "needs at least 4 grid points");
      }
    }
  }
  if (doc.contains("hetero")) {
    const json& h = doc.at("hetero");
    if (!h.is_object()) throw ConfigError("hetero", "expected an object");
    reject_unknown(h, {"max_iter", "tol", "truncation"}, "hetero");
    if (h.contains("max_iter")) cfg.hetero.max_iter = get_count(h.at("max_iter"), "hetero.max_iter", 0);
    if (h.contains("tol")) cfg.hetero.tol = get_number(h.at("tol"), "hetero.tol");
    if (h.contains("truncation")) {
      const json& t = h.at("truncation");
      if (t == "algebraic") {
        cfg.hetero.truncation = Truncation::algebraic;
      } else if (t == "magnitude") {
        cfg.hetero.truncation = Truncation::magnitude;
      } else {
        throw ConfigError("hetero.truncation", "expected \"algebraic\" or \"magnitude\"");
      }
    }
  }
  if (doc.contains("track_convergence")) {
    if (!doc.at("track_convergence").is_boolean()) throw ConfigError("track_convergence", "expected a boolean");
    cfg.track_convergence = doc.at("track_convergence").get<bool>();
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  const std::string text = read_text_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", path.string() + ": invalid JSON: " + e.what());
  }
  RunConfig cfg = parse_config(doc);
  cfg.text = text;
  return cfg;
}

MixtureSpec resolve_spec(const RunConfig& cfg, std::optional<double> theta) {
  if (cfg.spec) return *cfg.spec;
  PresetOptions opts = cfg.preset_options;
  if (theta) opts.theta = *theta;
  try {
    return preset(cfg.preset, opts);
  } catch (const ParameterError& e) {
    throw ConfigError("preset", e.what());
  }
}

std::uint64_t resolve_seed(const RunConfig* cfg, std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (cfg != nullptr && cfg->seed) return *cfg->seed;
  if (const char* env = std::getenv("HETEROSPECTRA_SEED"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("HETEROSPECTRA_SEED", "expected a nonnegative integer");
    return v;
  }
  return 0;
}

}  // namespace heterospectra::cli
