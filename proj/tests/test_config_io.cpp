#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "hemopar/config.hpp"
#include "hemopar/errors.hpp"
#include "hemopar/glm.hpp"
#include "hemopar/io.hpp"
#include "hemopar/rng.hpp"

using namespace hemopar;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hemopar_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string config_error(const json& doc) {
  try {
    config_from_json(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("default config round-trips through json") {
  const ExperimentConfig c;
  CHECK(config_from_json(json::parse(to_json(c).dump())) == c);
  CHECK(c.paradigm.resolve() == default_paradigm());
  CHECK(c.phantom == default_phantom_spec());
}

TEST_CASE("modified config round-trips through a file") {
  ExperimentConfig c;
  c.paradigm.generator.reset();
  c.paradigm.onsets = {{2.0, 7.5, 13.0}, {4.0, 10.5}};
  c.paradigm.n_scans = 40;
  c.phantom.amplitude = {2.1, 0.1};
  c.phantom.blobs.push_back({1.0, 2.0, 0.1 + 0.2});
  c.noise_grid = {0.25, 1.0 / 3.0};
  c.method = Method::sw;
  c.parcels = 7;
  c.refit.tol = 1e-7;
  c.base_seed = 0xffffffffffffull;
  const fs::path dir = scratch("config");
  save_config(c, dir / "c.json");
  const ExperimentConfig back = load_config(dir / "c.json");
  CHECK(back == c);
  CHECK_FALSE(back.paradigm.generator.has_value());
  CHECK(back.paradigm.resolve().onsets == c.paradigm.onsets);
}

TEST_CASE("partial config keeps defaults") {
  const ExperimentConfig c = config_from_json(json::parse(R"({"version": 1, "noise": {"variance": 2.5}})"));
  ExperimentConfig expected;
  expected.noise_variance = 2.5;
  CHECK(c == expected);
}

TEST_CASE("config errors name the field") {
  CHECK(config_error(json::parse(R"({"noise": {"variance": 1}})")).find("version") != std::string::npos);
  CHECK(config_error(json::parse(R"({"version": 1, "paradigm": {"tr": "fast"}})")).find("paradigm.tr") !=
        std::string::npos);
  CHECK(config_error(json::parse(R"({"version": 1, "glm": {"drift_ordr": 3}})")).find("glm.drift_ordr") !=
        std::string::npos);
  CHECK(config_error(json::parse(R"({"version": 1, "parcellation": {"method": "kmeans"}})")) != "");
  CHECK(config_error(json::parse(R"({"version": 1, "mc": {"runs": 0}})")) != "");
  CHECK(config_error(json::parse(R"({"version": 1, "paradigm": {"tr": 1.0, "dt": 0.3}})")) != "");
  CHECK(config_error(json::parse(R"({"version": 2})")) != "");
  CHECK(config_error(json::parse(R"([1, 2])")) != "");

  const fs::path dir = scratch("badconfig");
  write_text(dir / "broken.json", "{ \"version\": 1, ");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "absent.json"), ConfigError);
}

TEST_CASE("decimal formatting round-trips every double") {
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    double v;
    const std::uint64_t bits = rng.next_u64();
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    const double back = parse_double(format_double(v), "test");
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-0.0) == "-0");
  CHECK(std::isnan(parse_double(format_double(std::numeric_limits<double>::quiet_NaN()), "t")));
  CHECK(parse_double(format_double(-std::numeric_limits<double>::infinity()), "t") ==
        -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(parse_double("1.5x", "ctx"), DataError);
  CHECK_THROWS_AS(parse_double("", "ctx"), DataError);
}

TEST_CASE("sha-256 of known inputs") {
  CHECK(sha256_bytes("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_bytes("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const fs::path dir = scratch("sha");
  write_text(dir / "abc.txt", "abc");
  CHECK(sha256_file(dir / "abc.txt") == sha256_bytes("abc"));
}

TEST_CASE("dataset round-trip is bit exact") {
  const Phantom ph = default_phantom(12);
  const Dataset ds = synthesize_dataset(ph.grid, ph.truth, ph.paradigm, DriftSpec{}, 1.5, 13);
  const fs::path dir = scratch("dataset");
  write_dataset(ds, default_phantom_spec(), dir);
  const Dataset back = read_dataset(dir);
  CHECK(back.grid.width() == 20);
  CHECK(back.grid.height() == 20);
  CHECK(back.paradigm == ds.paradigm);
  CHECK(back.truth == ds.truth);
  CHECK(back.drift == ds.drift);
  CHECK(back.noise_variance == ds.noise_variance);
  CHECK(back.seed == ds.seed);
  REQUIRE(back.y.rows() == ds.y.rows());
  REQUIRE(back.y.cols() == ds.y.cols());
  CHECK(std::memcmp(back.y.data(), ds.y.data(), sizeof(double) * static_cast<std::size_t>(ds.y.size())) == 0);
  CHECK(back.drift_coeffs == ds.drift_coeffs);
  CHECK(fs::file_size(dir / "y.bin") == sizeof(double) * 400 * 500);

  fs::resize_file(dir / "y.bin", 100);
  CHECK_THROWS_AS(read_dataset(dir), DataError);
  CHECK_THROWS_AS(read_dataset(dir / "nowhere"), DataError);
}

TEST_CASE("features and labels round-trip") {
  const Phantom ph = default_phantom(2);
  const Dataset ds = synthesize_dataset(ph.grid, ph.truth, ph.paradigm, DriftSpec{}, 1.0, 3);
  const DesignMatrix design = build_glm_design(ds.paradigm, canonical_hrf_basis(1.0, 0.5, 32.0), 4);
  const FeatureMap fm = extract_features(ds, design);
  const fs::path dir = scratch("features");
  write_features(fm, dir / "f.csv");
  const FeatureMap back = read_features(dir / "f.csv");
  CHECK(back.grid.width() == 20);
  CHECK(back.grid.height() == 20);
  CHECK(back.phi == fm.phi);
  CHECK(back.alpha == fm.alpha);
  for (std::size_t j = 0; j < fm.size(); ++j) {
    CHECK(back.glm[j].beta0 == fm.glm[j].beta0);
    CHECK(back.glm[j].t0 == fm.glm[j].t0);
    CHECK(back.glm[j].p0 == fm.glm[j].p0);
  }

  const Labels labels = ph.truth.parcel_labels;
  write_labels(ph.grid, labels, dir / "l.csv");
  CHECK(read_labels(ph.grid, dir / "l.csv") == labels);
  CHECK_THROWS_AS(read_labels(Grid2D(5, 5), dir / "l.csv"), DataError);

  write_text(dir / "bad.csv", "voxel,x,y,beta0\n0,0,0,1\n");
  CHECK_THROWS_AS(read_features(dir / "bad.csv"), DataError);
}

TEST_CASE("merge log lines") {
  const std::vector<MergeRecord> log{{0, 3, 4, 1.25}, {1, 0, 3, -2.0}};
  const fs::path dir = scratch("merges");
  write_merge_log(log, Method::igmm, dir / "m.jsonl");
  write_merge_log(log, Method::sw, dir / "w.jsonl");
  const std::string igmm = read_text(dir / "m.jsonl");
  CHECK(igmm == "{\"step\":0,\"gamma\":3,\"tau\":4,\"gain\":1.25}\n{\"step\":1,\"gamma\":0,\"tau\":3,\"gain\":-2.0}\n");
  CHECK(read_text(dir / "w.jsonl").find("\"cost\":1.25") != std::string::npos);
}
