#pragma once

// File formats: CSV with 17 significant digits (round-trip exact), and JSON
// documents for matrices, mixture specs and the inference results.

#include "heterospectra/estimators.hpp"
#include "heterospectra/inference.hpp"
#include "heterospectra/synthgen.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace heterospectra {

using json = nlohmann::json;

std::string format_double(double v);

std::string read_text_file(const std::filesystem::path& path);
/// Creates parent directories; throws IoError when the file cannot be written.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Headerless numeric CSV, one matrix row per line.
std::string matrix_to_csv(const Mat& a);
void write_matrix_csv(const std::filesystem::path& path, const Mat& a);
Mat read_matrix_csv(const std::filesystem::path& path);

/// {"rows": r, "cols": c, "data": [row-major values]}
json to_json(const Mat& a);
/// Throws ConfigError naming `field` on malformed input.
Mat mat_from_json(const json& j, const std::string& field);

/// Means with long constant stretches use {"runs": [[count, value], ...]}.
json to_json(const MixtureSpec& spec);
/// Rejects unknown keys; errors name the offending field path under `field`.
MixtureSpec spec_from_json(const json& j, const std::string& field = "spec");

json to_json(const SubspaceEstimate& est);
json to_json(const EntrywiseLaw& law);
json to_json(const ClassCovEstimate& est);
json to_json(const Diagnostics& dg);

json json_or_null(double v);

}  // namespace heterospectra
