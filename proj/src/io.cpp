#include "hemopar/io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "hemopar/errors.hpp"

namespace hemopar {

using nlohmann::json;
using nlohmann::ordered_json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, const std::string& context) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw DataError(context + ": malformed number '" + std::string(text) + "'");
  return v;
}

namespace {

long long parse_int(std::string_view text, const std::string& context) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw DataError(context + ": malformed integer '" + std::string(text) + "'");
  return v;
}

std::string hex(const unsigned char* d, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(2 * n);
  for (unsigned i = 0; i < n; ++i) {
    s.push_back(digits[d[i] >> 4]);
    s.push_back(digits[d[i] & 15]);
  }
  return s;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
}

// Little-endian float64 I/O independent of host byte order.
void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

void write_map(const Grid2D& grid, const std::vector<double>& values, const fs::path& path) {
  std::string s = "x,y,value\n";
  for (std::size_t j = 0; j < grid.size(); ++j)
    s += std::to_string(grid.x_of(j)) + "," + std::to_string(grid.y_of(j)) + "," + format_double(values[j]) + "\n";
  write_text(path, s);
}

void write_int_map(const Grid2D& grid, const std::vector<int>& values, const fs::path& path) {
  std::string s = "x,y,value\n";
  for (std::size_t j = 0; j < grid.size(); ++j)
    s += std::to_string(grid.x_of(j)) + "," + std::to_string(grid.y_of(j)) + "," + std::to_string(values[j]) + "\n";
  write_text(path, s);
}

// Reads an x,y,<column> map into voxel order, requiring each voxel exactly once.
template <typename T, typename Parse>
std::vector<T> read_map(const Grid2D& grid, const fs::path& path, const std::string& column, Parse parse) {
  const auto rows = read_csv(path, {"x", "y", column});
  std::vector<T> out(grid.size());
  std::vector<char> seen(grid.size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string ctx = path.string() + ":" + std::to_string(r + 2);
    const auto x = parse_int(rows[r][0], ctx), y = parse_int(rows[r][1], ctx);
    if (x < 0 || y < 0 || x >= grid.width() || y >= grid.height())
      throw DataError(ctx + ": coordinate outside the " + std::to_string(grid.width()) + "x" +
                      std::to_string(grid.height()) + " grid");
    const std::size_t j = grid.index(static_cast<int>(x), static_cast<int>(y));
    if (seen[j]) throw DataError(ctx + ": duplicate voxel");
    seen[j] = 1;
    out[j] = parse(rows[r][2], ctx);
  }
  if (rows.size() != grid.size())
    throw DataError(path.string() + ": expected " + std::to_string(grid.size()) + " voxels, found " +
                    std::to_string(rows.size()));
  return out;
}

template <typename T>
T field(const json& j, const char* key, const fs::path& path) {
  if (!j.contains(key)) throw DataError(path.string() + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(path.string() + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

std::string sha256_bytes(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw DataError("SHA-256 computation failed");
  return hex(digest, len);
}

std::string sha256_file(const fs::path& path) { return sha256_bytes(read_text(path)); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, const std::vector<std::string>& header) {
  const std::string text = read_text(path);
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0, line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!header_seen) {
      if (cells != header) {
        std::string want;
        for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
        throw DataError(path.string() + ": expected header '" + want + "'");
      }
      header_seen = true;
      continue;
    }
    if (cells.size() != header.size())
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " columns");
    rows.push_back(std::move(cells));
  }
  if (!header_seen) throw DataError(path.string() + ": empty file");
  return rows;
}

// ---------------------------------------------------------------------------
// Dataset

void write_dataset(const Dataset& ds, const PhantomSpec& spec, const fs::path& dir) {
  fs::create_directories(dir);
  const std::size_t voxels = ds.grid.size();
  const auto scans = static_cast<std::size_t>(ds.y.cols());

  std::string bin;
  bin.reserve(voxels * scans * 8);
  for (std::size_t j = 0; j < voxels; ++j)
    for (std::size_t n = 0; n < scans; ++n)
      put_le(bin, ds.y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(n)));
  write_text(dir / "y.bin", bin);

  write_int_map(ds.grid, ds.truth.parcel_labels, dir / "parcels.csv");
  write_int_map(ds.grid, ds.truth.activation_labels, dir / "activation.csv");
  for (std::size_t m = 0; m < ds.truth.amplitudes.size(); ++m)
    write_map(ds.grid, ds.truth.amplitudes[m], dir / ("amplitudes_c" + std::to_string(m) + ".csv"));

  std::string hrf = "parcel,t,h\n";
  for (std::size_t g = 0; g < ds.truth.hrfs.size(); ++g) {
    const auto& c = ds.truth.hrfs[g];
    for (std::size_t d = 0; d < c.samples.size(); ++d)
      hrf += std::to_string(g) + "," + format_double(static_cast<double>(d) * c.dt) + "," +
             format_double(c.samples[d]) + "\n";
  }
  write_text(dir / "hrf_truth.csv", hrf);

  std::string drift = "voxel,k,value\n";
  for (Eigen::Index j = 0; j < ds.drift_coeffs.rows(); ++j)
    for (Eigen::Index k = 0; k < ds.drift_coeffs.cols(); ++k)
      drift += std::to_string(j) + "," + std::to_string(k) + "," + format_double(ds.drift_coeffs(j, k)) + "\n";
  write_text(dir / "drift.csv", drift);

  ordered_json side;
  side["format"] = "hemopar-dataset";
  side["version"] = 1;
  side["grid"] = {{"width", ds.grid.width()}, {"height", ds.grid.height()}};
  side["paradigm"] = {{"n_scans", ds.paradigm.n_scans},
                      {"tr", ds.paradigm.tr},
                      {"dt", ds.paradigm.dt},
                      {"onsets", ds.paradigm.onsets}};
  side["seed"] = ds.seed;
  side["noise_variance"] = ds.noise_variance;
  side["drift"] = {{"order", ds.drift.order}, {"variance", ds.drift.variance}};
  side["series"] = {{"file", "y.bin"},
                    {"dtype", "float64"},
                    {"byte_order", "little"},
                    {"order", "voxel-major"},
                    {"shape", {voxels, scans}}};
  side["parcel_count"] = ds.truth.parcel_count();
  side["conditions"] = ds.truth.amplitudes.size();
  ordered_json hrfs = ordered_json::array();
  for (const auto& h : spec.hrfs)
    hrfs.push_back({{"time_to_peak", h.time_to_peak},
                    {"peak_amplitude", h.peak_amplitude},
                    {"time_to_undershoot", h.time_to_undershoot},
                    {"undershoot_amplitude", h.undershoot_amplitude},
                    {"duration", h.duration},
                    {"peak_width", h.peak_width},
                    {"undershoot_width", h.undershoot_width}});
  ordered_json blobs = ordered_json::array();
  for (const auto& b : spec.blobs) blobs.push_back({{"cx", b.cx}, {"cy", b.cy}, {"radius", b.radius}});
  side["phantom"] = {{"tiles", {spec.tiles_x, spec.tiles_y}},
                     {"hrfs", hrfs},
                     {"blobs", blobs},
                     {"amplitude", {{"mean", spec.amplitude.mean}, {"variance", spec.amplitude.variance}}}};
  write_text(dir / kDatasetSidecar, side.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const fs::path side_path = dir / kDatasetSidecar;
  if (!fs::exists(side_path)) throw DataError("no dataset at " + dir.string() + " (missing " + kDatasetSidecar + ")");
  const json side = read_json(side_path);
  if (field<std::string>(side, "format", side_path) != "hemopar-dataset")
    throw DataError(side_path.string() + ": not a hemopar dataset sidecar");

  const json& g = side.at("grid");
  Dataset ds{Grid2D(field<int>(g, "width", side_path), field<int>(g, "height", side_path)), {}, {}, {}, {}, {}, 0.0, 0};
  const json& p = side.at("paradigm");
  ds.paradigm.n_scans = field<int>(p, "n_scans", side_path);
  ds.paradigm.tr = field<double>(p, "tr", side_path);
  ds.paradigm.dt = field<double>(p, "dt", side_path);
  ds.paradigm.onsets = field<std::vector<std::vector<double>>>(p, "onsets", side_path);
  try {
    ds.paradigm.validate();
  } catch (const ConfigError& e) {
    throw DataError(side_path.string() + ": " + e.what());
  }
  ds.seed = field<std::uint64_t>(side, "seed", side_path);
  ds.noise_variance = field<double>(side, "noise_variance", side_path);
  ds.drift.order = field<int>(side.at("drift"), "order", side_path);
  ds.drift.variance = field<double>(side.at("drift"), "variance", side_path);

  const json& series = side.at("series");
  if (field<std::string>(series, "dtype", side_path) != "float64" ||
      field<std::string>(series, "byte_order", side_path) != "little" ||
      field<std::string>(series, "order", side_path) != "voxel-major")
    throw DataError(side_path.string() + ": unsupported series encoding");
  const auto shape = field<std::vector<std::size_t>>(series, "shape", side_path);
  const std::size_t voxels = ds.grid.size(), scans = static_cast<std::size_t>(ds.paradigm.n_scans);
  if (shape.size() != 2 || shape[0] != voxels || shape[1] != scans)
    throw DataError(side_path.string() + ": series shape disagrees with grid and n_scans");
  const std::string bin = read_text(dir / field<std::string>(series, "file", side_path));
  if (bin.size() != voxels * scans * 8)
    throw DataError((dir / "y.bin").string() + ": expected " + std::to_string(voxels * scans * 8) + " bytes, found " +
                    std::to_string(bin.size()));
  ds.y.resize(static_cast<Eigen::Index>(voxels), static_cast<Eigen::Index>(scans));
  for (std::size_t j = 0; j < voxels; ++j)
    for (std::size_t n = 0; n < scans; ++n)
      ds.y(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(n)) = get_le(bin.data() + 8 * (j * scans + n));

  auto as_int = [](std::string_view s, const std::string& ctx) { return static_cast<int>(parse_int(s, ctx)); };
  ds.truth.parcel_labels = read_map<int>(ds.grid, dir / "parcels.csv", "value", as_int);
  ds.truth.activation_labels = read_map<int>(ds.grid, dir / "activation.csv", "value", as_int);
  const auto conditions = field<std::size_t>(side, "conditions", side_path);
  for (std::size_t m = 0; m < conditions; ++m)
    ds.truth.amplitudes.push_back(
        read_map<double>(ds.grid, dir / ("amplitudes_c" + std::to_string(m) + ".csv"), "value", parse_double));

  const auto parcels = field<std::size_t>(side, "parcel_count", side_path);
  ds.truth.hrfs.assign(parcels, HrfCurve{});
  const auto hrf_rows = read_csv(dir / "hrf_truth.csv", {"parcel", "t", "h"});
  for (std::size_t r = 0; r < hrf_rows.size(); ++r) {
    const std::string ctx = (dir / "hrf_truth.csv").string() + ":" + std::to_string(r + 2);
    const auto g_id = parse_int(hrf_rows[r][0], ctx);
    if (g_id < 0 || static_cast<std::size_t>(g_id) >= parcels) throw DataError(ctx + ": parcel out of range");
    auto& curve = ds.truth.hrfs[static_cast<std::size_t>(g_id)];
    curve.samples.push_back(parse_double(hrf_rows[r][2], ctx));
    curve.dt = ds.paradigm.dt;
    curve.duration = parse_double(hrf_rows[r][1], ctx);
  }

  ds.drift_coeffs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(voxels), ds.drift.order);
  const auto drift_rows = read_csv(dir / "drift.csv", {"voxel", "k", "value"});
  for (std::size_t r = 0; r < drift_rows.size(); ++r) {
    const std::string ctx = (dir / "drift.csv").string() + ":" + std::to_string(r + 2);
    const auto j = parse_int(drift_rows[r][0], ctx), k = parse_int(drift_rows[r][1], ctx);
    if (j < 0 || k < 0 || j >= ds.drift_coeffs.rows() || k >= ds.drift_coeffs.cols())
      throw DataError(ctx + ": index out of range");
    ds.drift_coeffs(j, k) = parse_double(drift_rows[r][2], ctx);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Features, labels, merge log

void write_features(const FeatureMap& fm, const fs::path& path) {
  fm.validate();
  std::string s = "voxel,x,y,beta0,beta1,beta2,t0,p0,alpha\n";
  for (std::size_t j = 0; j < fm.size(); ++j) {
    VoxelGlm g;
    if (!fm.glm.empty()) g = fm.glm[j];
    else {
      g.beta1 = fm.phi[j](0);
      g.beta2 = fm.phi[j](1);
      g.p0 = 1.0 - fm.alpha[j];
    }
    s += std::to_string(j) + "," + std::to_string(fm.grid.x_of(j)) + "," + std::to_string(fm.grid.y_of(j)) + "," +
         format_double(g.beta0) + "," + format_double(fm.phi[j](0)) + "," + format_double(fm.phi[j](1)) + "," +
         format_double(g.t0) + "," + format_double(g.p0) + "," + format_double(fm.alpha[j]) + "\n";
  }
  write_text(path, s);
}

FeatureMap read_features(const fs::path& path) {
  const auto rows = read_csv(path, {"voxel", "x", "y", "beta0", "beta1", "beta2", "t0", "p0", "alpha"});
  if (rows.empty()) throw DataError(path.string() + ": no voxels");
  long long width = 0, height = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string ctx = path.string() + ":" + std::to_string(r + 2);
    width = std::max(width, parse_int(rows[r][1], ctx) + 1);
    height = std::max(height, parse_int(rows[r][2], ctx) + 1);
  }
  if (static_cast<std::size_t>(width * height) != rows.size())
    throw DataError(path.string() + ": voxel coordinates do not tile a " + std::to_string(width) + "x" +
                    std::to_string(height) + " grid");
  FeatureMap fm{Grid2D(static_cast<int>(width), static_cast<int>(height)), {}, {}, {}};
  fm.phi.assign(rows.size(), Eigen::Vector2d::Zero());
  fm.alpha.assign(rows.size(), 0.0);
  fm.glm.assign(rows.size(), VoxelGlm{});
  std::vector<char> seen(rows.size(), 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string ctx = path.string() + ":" + std::to_string(r + 2);
    const auto x = parse_int(rows[r][1], ctx), y = parse_int(rows[r][2], ctx);
    if (x < 0 || y < 0) throw DataError(ctx + ": negative coordinate");
    const std::size_t j = fm.grid.index(static_cast<int>(x), static_cast<int>(y));
    if (parse_int(rows[r][0], ctx) != static_cast<long long>(j))
      throw DataError(ctx + ": voxel index disagrees with its coordinates");
    if (seen[j]) throw DataError(ctx + ": duplicate voxel");
    seen[j] = 1;
    VoxelGlm& g = fm.glm[j];
    g.beta0 = parse_double(rows[r][3], ctx);
    g.beta1 = parse_double(rows[r][4], ctx);
    g.beta2 = parse_double(rows[r][5], ctx);
    g.t0 = parse_double(rows[r][6], ctx);
    g.p0 = parse_double(rows[r][7], ctx);
    fm.phi[j] = Eigen::Vector2d(g.beta1, g.beta2);
    fm.alpha[j] = parse_double(rows[r][8], ctx);
  }
  try {
    fm.validate();
  } catch (const std::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return fm;
}

void write_labels(const Grid2D& grid, const Labels& labels, const fs::path& path) {
  if (labels.size() != grid.size()) throw DataError("label map does not match the grid");
  std::string s = "x,y,label\n";
  for (std::size_t j = 0; j < grid.size(); ++j)
    s += std::to_string(grid.x_of(j)) + "," + std::to_string(grid.y_of(j)) + "," + std::to_string(labels[j]) + "\n";
  write_text(path, s);
}

Labels read_labels(const Grid2D& grid, const fs::path& path) {
  return read_map<int>(grid, path, "label",
                       [](std::string_view s, const std::string& ctx) { return static_cast<int>(parse_int(s, ctx)); });
}

void write_merge_log(const std::vector<MergeRecord>& log, Method method, const fs::path& path) {
  const char* score = method == Method::igmm ? "gain" : "cost";
  std::string s;
  for (const auto& r : log) {
    ordered_json j;
    j["step"] = r.step;
    j["gamma"] = r.first;
    j["tau"] = r.second;
    j[score] = r.score;
    s += j.dump() + "\n";
  }
  write_text(path, s);
}

void write_refit(const HrfRefit& refit, const Grid2D& grid, const fs::path& dir) {
  fs::create_directories(dir);
  ordered_json summary;
  summary["parcels"] = ordered_json::array();
  for (const auto& p : refit.parcels) {
    std::string s = "t,h\n";
    for (std::size_t d = 0; d < p.hrf.samples.size(); ++d)
      s += format_double(static_cast<double>(d) * p.hrf.dt) + "," + format_double(p.hrf.samples[d]) + "\n";
    write_text(dir / ("hrf_" + std::to_string(p.label) + ".csv"), s);
    summary["parcels"].push_back(
        {{"label", p.label}, {"iterations", p.iterations}, {"residual_trace", p.residual_trace}});
  }
  for (std::size_t m = 0; m < refit.amplitudes.size(); ++m)
    write_map(grid, refit.amplitudes[m], dir / ("amplitudes_c" + std::to_string(m) + ".csv"));
  write_text(dir / "refit.json", summary.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Monte Carlo report

ordered_json report_to_json(const McReport& r) {
  ordered_json j;
  j["runs"] = r.runs;
  j["base_seed"] = r.base_seed;
  j["noise_grid"] = r.noise_grid;
  j["methods"] = r.methods;
  j["summary"] = ordered_json::array();
  for (std::size_t m = 0; m < r.methods.size(); ++m)
    for (std::size_t s = 0; s < r.noise_grid.size(); ++s) {
      const McSummary mi = r.mi_summary(m, s), mse = r.mse_summary(m, s);
      double lumping = 0.0, wall = 0.0;
      for (const auto& x : r.samples[m][s]) {
        lumping += x.lumping;
        wall += x.wall_ms;
      }
      const double n = static_cast<double>(r.samples[m][s].size());
      j["summary"].push_back({{"method", r.methods[m]},
                              {"sigma2", r.noise_grid[s]},
                              {"mi_mean", mi.mean},
                              {"mi_std", mi.stddev},
                              {"mi_stderr", mi.stderr_},
                              {"mse_mean", mse.mean},
                              {"mse_std", mse.stddev},
                              {"mse_stderr", mse.stderr_},
                              {"lumping_mean", lumping / n},
                              {"wall_ms_mean", wall / n}});
    }
  j["samples"] = ordered_json::array();
  for (std::size_t m = 0; m < r.methods.size(); ++m)
    for (std::size_t s = 0; s < r.noise_grid.size(); ++s)
      for (std::size_t k = 0; k < r.samples[m][s].size(); ++k) {
        const auto& x = r.samples[m][s][k];
        j["samples"].push_back({{"method", r.methods[m]},
                                {"sigma2", r.noise_grid[s]},
                                {"run", k},
                                {"seed", r.seeds[s][k]},
                                {"mi", x.mi},
                                {"mse", x.mse},
                                {"lumping", x.lumping},
                                {"wall_ms", x.wall_ms}});
      }
  return j;
}

std::string report_to_csv(const McReport& r) {
  std::string s = "method,sigma2,run,mi,mse,wall_ms\n";
  for (std::size_t m = 0; m < r.methods.size(); ++m)
    for (std::size_t k = 0; k < r.noise_grid.size(); ++k)
      for (std::size_t run = 0; run < r.samples[m][k].size(); ++run) {
        const auto& x = r.samples[m][k][run];
        s += r.methods[m] + "," + format_double(r.noise_grid[k]) + "," + std::to_string(run) + "," +
             format_double(x.mi) + "," + format_double(x.mse) + "," + format_double(x.wall_ms) + "\n";
      }
  return s;
}

}  // namespace hemopar
