#include "heterospectra/io.hpp"

#include "heterospectra/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace heterospectra {
namespace fs = std::filesystem;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& field) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError(field + "." + key, "unknown key");
  }
}

const json& require(const json& j, const std::string& key, const std::string& field) {
  if (!j.contains(key)) throw ConfigError(field + "." + key, "missing required key");
  return j.at(key);
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  return j.get<double>();
}

Index count(const json& j, const std::string& field) {
  if (!j.is_number_integer()) throw ConfigError(field, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < 0) throw ConfigError(field, "expected a nonnegative integer");
  return static_cast<Index>(v);
}

double number_or(const json& j, const std::string& key, double fallback, const std::string& field) {
  return j.contains(key) ? number(j.at(key), field + "." + key) : fallback;
}

json means_to_json(const Vec& mean) {
  json runs = json::array();
  for (Index i = 0; i < mean.size();) {
    Index k = i;
    while (k < mean.size() && mean[k] == mean[i]) ++k;
    runs.push_back(json::array({k - i, mean[i]}));
    i = k;
  }
  if (static_cast<Index>(runs.size()) * 2 <= mean.size()) return json{{"runs", runs}};
  return json(std::vector<double>(mean.data(), mean.data() + mean.size()));
}

Vec means_from_json(const json& j, Index d, const std::string& field) {
  std::vector<double> values;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) values.push_back(number(j[i], field + "[" + std::to_string(i) + "]"));
  } else if (j.is_object()) {
    reject_unknown(j, {"runs"}, field);
    const json& runs = require(j, "runs", field);
    if (!runs.is_array()) throw ConfigError(field + ".runs", "expected an array of [count, value]");
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const std::string f = field + ".runs[" + std::to_string(r) + "]";
      if (!runs[r].is_array() || runs[r].size() != 2) throw ConfigError(f, "expected [count, value]");
      const Index c = count(runs[r][0], f + "[0]");
      values.insert(values.end(), static_cast<std::size_t>(c), number(runs[r][1], f + "[1]"));
    }
  } else {
    throw ConfigError(field, "expected an array or a {\"runs\": ...} object");
  }
  if (static_cast<Index>(values.size()) != d) {
    throw ConfigError(field, "mean has length " + std::to_string(values.size()) + ", expected d = " +
                                 std::to_string(d));
  }
  return Eigen::Map<const Vec>(values.data(), d);
}

json cov_to_json(const CovSpec& c) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, cov::Spherical>) {
          return {{"type", "spherical"}, {"variance", v.variance}};
        } else if constexpr (std::is_same_v<T, cov::LowRankPlusIdentity>) {
          return {{"type", "low_rank_plus_identity"}, {"scale", v.scale}, {"stiefel_dim", v.stiefel_dim},
                  {"ridge", v.ridge}};
        } else if constexpr (std::is_same_v<T, cov::Explicit>) {
          return {{"type", "explicit"}, {"sigma", to_json(v.sigma)}};
        } else if constexpr (std::is_same_v<T, cov::ProjectorPlusIdentity>) {
          return {{"type", "projector_plus_identity"}, {"scale", v.scale}, {"ridge", v.ridge}};
        } else if constexpr (std::is_same_v<T, cov::UniformFactorPlusIdentity>) {
          return {{"type", "uniform_factor_plus_identity"}, {"upper", v.upper}, {"ridge", v.ridge}};
        } else {
          return {{"type", "signal_angle"}, {"scale", v.scale}, {"theta", v.theta}, {"ridge", v.ridge}};
        }
      },
      c);
}

CovSpec cov_from_json(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  const json& type = require(j, "type", field);
  if (!type.is_string()) throw ConfigError(field + ".type", "expected a string");
  const std::string t = type.get<std::string>();
  if (t == "spherical") {
    reject_unknown(j, {"type", "variance"}, field);
    return cov::Spherical{number(require(j, "variance", field), field + ".variance")};
  }
  if (t == "low_rank_plus_identity") {
    reject_unknown(j, {"type", "scale", "stiefel_dim", "ridge"}, field);
    return cov::LowRankPlusIdentity{number(require(j, "scale", field), field + ".scale"),
                                    count(require(j, "stiefel_dim", field), field + ".stiefel_dim"),
                                    number_or(j, "ridge", 1.0, field)};
  }
  if (t == "explicit") {
    reject_unknown(j, {"type", "sigma"}, field);
    return cov::Explicit{mat_from_json(require(j, "sigma", field), field + ".sigma")};
  }
  if (t == "projector_plus_identity") {
    reject_unknown(j, {"type", "scale", "ridge"}, field);
    return cov::ProjectorPlusIdentity{number_or(j, "scale", 1.0, field), number_or(j, "ridge", 1.0, field)};
  }
  if (t == "uniform_factor_plus_identity") {
    reject_unknown(j, {"type", "upper", "ridge"}, field);
    return cov::UniformFactorPlusIdentity{number(require(j, "upper", field), field + ".upper"),
                                          number_or(j, "ridge", 1.0, field)};
  }
  if (t == "signal_angle") {
    reject_unknown(j, {"type", "scale", "theta", "ridge"}, field);
    return cov::SignalAngle{number_or(j, "scale", 1.0, field),
                            number(require(j, "theta", field), field + ".theta"),
                            number_or(j, "ridge", 1.0, field)};
  }
  throw ConfigError(field + ".type", "unknown covariance type '" + t + "'");
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string matrix_to_csv(const Mat& a) {
  std::string out;
  out.reserve(static_cast<std::size_t>(a.size()) * 24);
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      if (j > 0) out += ',';
      out += format_double(a(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_matrix_csv(const fs::path& path, const Mat& a) { write_text_file(path, matrix_to_csv(a)); }

Mat read_matrix_csv(const fs::path& path) {
  const std::string text = read_text_file(path);
  std::vector<double> values;
  Index rows = 0;
  Index cols = -1;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    if (line.empty()) continue;
    Index c = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size()) {
        throw IoError(path.string() + ": line " + std::to_string(rows + 1) + ": cannot parse '" +
                      std::string(cell) + "'");
      }
      values.push_back(v);
      ++c;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols >= 0 && c != cols) {
      throw IoError(path.string() + ": line " + std::to_string(rows + 1) + " has " + std::to_string(c) +
                    " fields, expected " + std::to_string(cols));
    }
    cols = c;
    ++rows;
  }
  if (rows == 0) throw IoError(path.string() + ": no data");
  return mat_from_row_major(rows, cols, values);
}

json to_json(const Mat& a) {
  return {{"rows", a.rows()}, {"cols", a.cols()}, {"data", to_row_major(a)}};
}

Mat mat_from_json(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected {rows, cols, data}");
  reject_unknown(j, {"rows", "cols", "data"}, field);
  const Index rows = count(require(j, "rows", field), field + ".rows");
  const Index cols = count(require(j, "cols", field), field + ".cols");
  const json& data = require(j, "data", field);
  if (!data.is_array() || static_cast<Index>(data.size()) != rows * cols) {
    throw ConfigError(field + ".data", "expected " + std::to_string(rows * cols) + " numbers");
  }
  std::vector<double> values;
  values.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) values.push_back(number(data[i], field + ".data[" + std::to_string(i) + "]"));
  return mat_from_row_major(rows, cols, values);
}

json to_json(const MixtureSpec& spec) {
  json means = json::array();
  for (const Vec& m : spec.means) means.push_back(means_to_json(m));
  json covs = json::array();
  for (const CovSpec& c : spec.covs) covs.push_back(cov_to_json(c));
  json j{{"d", spec.d},
         {"sizes", spec.sizes},
         {"means", means},
         {"covs", covs},
         {"noise_driver", spec.noise_driver == NoiseDriver::gaussian ? "gaussian" : "rademacher"}};
  if (!spec.description.empty()) j["description"] = spec.description;
  return j;
}

MixtureSpec spec_from_json(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
  reject_unknown(j, {"d", "sizes", "means", "covs", "noise_driver", "description"}, field);
  MixtureSpec spec;
  spec.d = count(require(j, "d", field), field + ".d");
  const json& sizes = require(j, "sizes", field);
  if (!sizes.is_array()) throw ConfigError(field + ".sizes", "expected an array");
  for (std::size_t k = 0; k < sizes.size(); ++k) spec.sizes.push_back(count(sizes[k], field + ".sizes[" + std::to_string(k) + "]"));
  const json& means = require(j, "means", field);
  if (!means.is_array()) throw ConfigError(field + ".means", "expected an array");
  for (std::size_t k = 0; k < means.size(); ++k) {
    spec.means.push_back(means_from_json(means[k], spec.d, field + ".means[" + std::to_string(k) + "]"));
  }
  const json& covs = require(j, "covs", field);
  if (!covs.is_array()) throw ConfigError(field + ".covs", "expected an array");
  for (std::size_t k = 0; k < covs.size(); ++k) spec.covs.push_back(cov_from_json(covs[k], field + ".covs[" + std::to_string(k) + "]"));
  if (j.contains("noise_driver")) {
    const json& nd = j.at("noise_driver");
    const std::string name = nd.is_string() ? nd.get<std::string>() : "";
    if (name == "gaussian") {
      spec.noise_driver = NoiseDriver::gaussian;
    } else if (name == "rademacher") {
      spec.noise_driver = NoiseDriver::rademacher;
    } else {
      throw ConfigError(field + ".noise_driver", "expected \"gaussian\" or \"rademacher\"");
    }
  }
  if (j.contains("description")) {
    if (!j.at("description").is_string()) throw ConfigError(field + ".description", "expected a string");
    spec.description = j.at("description").get<std::string>();
  }
  try {
    spec.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(field, e.what());
  }
  return spec;
}

json json_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json to_json(const SubspaceEstimate& est) {
  return {{"frame", to_json(est.frame.cols())},
          {"eigenvalues", std::vector<double>(est.eigenvalues.data(), est.eigenvalues.data() + est.eigenvalues.size())},
          {"iterations", est.iterations},
          {"converged", est.converged},
          {"gap_warning", est.gap_warning},
          {"diag_trace", est.diag_trace}};
}

json to_json(const EntrywiseLaw& law) {
  json per_class = json::array();
  for (const Mat& s : law.per_class_s) per_class.push_back(to_json(s));
  return {{"sigma", to_json(law.sigma)}, {"per_class_S", per_class}};
}

json to_json(const ClassCovEstimate& est) {
  json centroids = json::array();
  for (const Vec& c : est.centroids) centroids.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  json s_hat = json::array();
  for (const Mat& s : est.s_hat) s_hat.push_back(to_json(s));
  return {{"centroids", centroids}, {"S_hat", s_hat}, {"counts", est.counts}};
}

json to_json(const Diagnostics& dg) {
  json margins = json::array();
  for (const Margin& m : dg.margins) {
    margins.push_back({{"name", m.name},
                       {"assumption", m.assumption},
                       {"value", json_or_null(m.value)},
                       {"pass", m.pass ? json(*m.pass) : json(nullptr)}});
  }
  return {{"n", dg.n},
          {"d", dg.d},
          {"r", dg.r},
          {"kappa", json_or_null(dg.kappa)},
          {"mu0", json_or_null(dg.mu0)},
          {"sigma", json_or_null(dg.sigma)},
          {"snr", json_or_null(dg.snr)},
          {"kappa_sigma", json_or_null(dg.kappa_sigma)},
          {"kappa_sigma_upper", json_or_null(dg.kappa_sigma_upper)},
          {"kappa_sigma_lower", json_or_null(dg.kappa_sigma_lower)},
          {"margins", margins}};
}

}  // namespace heterospectra
