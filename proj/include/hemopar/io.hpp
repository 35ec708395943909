#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "hemopar/eval.hpp"
#include "hemopar/glm.hpp"
#include "hemopar/parcellation.hpp"
#include "hemopar/simgen.hpp"

namespace hemopar {

namespace fs = std::filesystem;

// Shortest decimal string that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text, const std::string& context);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);
std::string sha256_bytes(std::string_view bytes);

// Writes `text` to `path` (binary mode, so "\n" stays "\n").
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

// Rows of a comma-separated file whose header must equal `header`.
std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::vector<std::string>& header);

// Dataset directory: dataset.json sidecar, y.bin (little-endian float64,
// voxel-major J x N), parcels.csv / activation.csv / amplitudes_c<m>.csv maps
// as x,y,value, hrf_truth.csv (parcel,t,h) and drift.csv (voxel,k,value).
void write_dataset(const Dataset& dataset, const PhantomSpec& spec, const fs::path& dir);
Dataset read_dataset(const fs::path& dir);
inline constexpr const char* kDatasetSidecar = "dataset.json";

// voxel,x,y,beta0,beta1,beta2,t0,p0,alpha
void write_features(const FeatureMap& features, const fs::path& path);
FeatureMap read_features(const fs::path& path);

// x,y,label
void write_labels(const Grid2D& grid, const Labels& labels, const fs::path& path);
Labels read_labels(const Grid2D& grid, const fs::path& path);

// One JSON object per line: {"step","gamma","tau","gain"} for IGMM, "cost"
// instead of "gain" for spatial Ward.
void write_merge_log(const std::vector<MergeRecord>& log, Method method, const fs::path& path);

// hrf_<label>.csv (t,h) per parcel, amplitudes_c<m>.csv (x,y,value) and
// refit.json with iteration counts and residual traces.
void write_refit(const HrfRefit& refit, const Grid2D& grid, const fs::path& dir);

nlohmann::ordered_json report_to_json(const McReport& report);
// Long format: method,sigma2,run,mi,mse,wall_ms
std::string report_to_csv(const McReport& report);

}  // namespace hemopar
